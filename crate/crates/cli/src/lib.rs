//! `trajxai` command-line pipeline: synthesize or ingest AIS tracks, train
//! the forecaster, predict, explain, render and evaluate.
//!
//! Every subcommand prints a JSON run summary on stdout. Exit code 2 means a
//! usage or configuration problem, 1 a runtime failure.

mod commands;
pub mod config;
pub mod eval;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use trajxai_core::explainers::PfiMetric;
use trajxai_core::trajectory::{SplitName, SynthKind};
use trajxai_core::Component;

pub use config::RunConfig;
pub use eval::{evaluate, EvalReport, Metrics};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<trajxai_core::Error> for CliError {
    fn from(e: trajxai_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "trajxai", version, about = "Forecast vessel positions and explain the forecasts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; defaults to run.json in the output directory
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $TRAJXAI_OUT, else ./trajxai-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing output files
    #[arg(long)]
    pub force: bool,
    /// Worker threads for parallel evaluation; results do not depend on it
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Trajectory CSV (vessel_id,t,lon,lat) [default: <out>/trajectories.csv]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model checkpoint [default: <out>/model.json]
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExplainArgs {
    #[arg(long, value_enum)]
    pub component: Option<ComponentArg>,
    /// LIME perturbations
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub kernel_width: Option<f64>,
    /// Shapley permutations
    #[arg(long)]
    pub n_permutations: Option<usize>,
    /// Shapley background windows drawn from the training split
    #[arg(long)]
    pub background_size: Option<usize>,
    /// PFI shuffles per feature
    #[arg(long)]
    pub n_repeats: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fleet into <out>/trajectories.csv
    Synth {
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Number of trajectories
        #[arg(long)]
        n: Option<usize>,
        /// Points per trajectory
        #[arg(long)]
        points: Option<usize>,
        /// Seconds between points
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Gaussian position noise in degrees
        #[arg(long)]
        noise: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Normalize an AIS CSV into <out>/trajectories.csv
    Ingest {
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Column mapping, e.g. vessel_id=MMSI,t=BaseDateTime,lon=LON,lat=LAT
        #[arg(long)]
        schema: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the forecaster and write <out>/model.json
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        attn_dim: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        split_seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Forecast the next position for one window of a split
    Predict {
        #[arg(long)]
        instance: usize,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Explain one forecast (or, for pfi, a whole split)
    Explain {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        instance: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        explain: ExplainArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Draw a figure
    Render {
        #[arg(long, value_enum)]
        what: What,
        /// Window to overlay (overlay)
        #[arg(long)]
        instance: Option<usize>,
        /// Explanation JSON to draw (highlight, bars, heatmap)
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint against the persistence baseline
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Run every per-timestep explainer on one window and compare rankings
    Agree {
        #[arg(long)]
        instance: usize,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        explain: ExplainArgs,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Lime,
    Saliency,
    Attention,
    Pfi,
    Shap,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lime => "lime",
            Method::Saliency => "saliency",
            Method::Attention => "attention",
            Method::Pfi => "pfi",
            Method::Shap => "shap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum What {
    Overlay,
    Highlight,
    Bars,
    Heatmap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Validation => SplitName::Validation,
            SplitArg::Test => SplitName::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Line,
    Arc,
    Zigzag,
    #[value(name = "random_walk")]
    RandomWalk,
}

impl From<KindArg> for SynthKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Line => SynthKind::Line,
            KindArg::Arc => SynthKind::Arc,
            KindArg::Zigzag => SynthKind::Zigzag,
            KindArg::RandomWalk => SynthKind::RandomWalk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ComponentArg {
    Dlat,
    Dlon,
}

impl From<ComponentArg> for Component {
    fn from(c: ComponentArg) -> Self {
        match c {
            ComponentArg::Dlat => Component::Dlat,
            ComponentArg::Dlon => Component::Dlon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Mse,
    #[value(name = "haversine_m")]
    HaversineM,
}

impl From<MetricArg> for PfiMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Mse => PfiMetric::Mse,
            MetricArg::HaversineM => PfiMetric::HaversineM,
        }
    }
}

/// Parses and executes `argv` (program name first), returning the summary.
pub fn execute<I, T>(argv: I) -> Result<Value, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    commands::dispatch(cli.command)
}

/// Entry point shared by the binary: prints the summary or the error and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
