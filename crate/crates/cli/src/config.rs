use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trajxai_core::explainers::{PfiMetric, LIME_MIN_SAMPLES};
use trajxai_core::trajectory::{SynthKind, SynthParams};
use trajxai_core::{Component, ModelConfig, RenderSpec};

use crate::CliError;

pub const OUT_ENV: &str = "TRAJXAI_OUT";
pub const DEFAULT_OUT: &str = "trajxai-out";
pub const DATA_FILE: &str = "trajectories.csv";
pub const CHECKPOINT_FILE: &str = "model.json";
/// Resolved configuration written by `train` and picked up by later commands.
pub const RUN_CONFIG_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub points: usize,
    pub dt: f64,
    pub seed: u64,
    pub params: SynthParams,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            kind: SynthKind::Line,
            n: 200,
            points: 30,
            dt: 60.0,
            seed: 0,
            params: SynthParams {
                position_noise: 3e-4,
                ..SynthParams::default()
            },
        }
    }
}

/// Where trajectories come from. A CSV wins over a synth spec; with neither,
/// commands read `trajectories.csv` in the output directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSource {
    pub csv: Option<PathBuf>,
    /// `vessel_id=MMSI,t=BaseDateTime,...` column mapping for `csv`.
    pub schema: Option<String>,
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainDefaults {
    pub component: Component,
    pub n_samples: usize,
    pub kernel_width: Option<f64>,
    pub n_permutations: usize,
    pub background_size: usize,
    pub n_repeats: usize,
    pub metric: PfiMetric,
    pub seed: u64,
}

impl Default for ExplainDefaults {
    fn default() -> Self {
        Self {
            component: Component::Dlat,
            n_samples: 1000,
            kernel_width: None,
            n_permutations: 10,
            background_size: 100,
            n_repeats: 10,
            metric: PfiMetric::Mse,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    /// Train / validation / test fractions of trajectories.
    pub split: [f64; 3],
    pub split_seed: u64,
    pub model: ModelConfig,
    pub explain: ExplainDefaults,
    pub render: RenderSpec,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            split: [0.7, 0.15, 0.15],
            split_seed: 0,
            model: ModelConfig::default(),
            explain: ExplainDefaults::default(),
            render: RenderSpec::default(),
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        self.model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.render.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.split.iter().any(|r| !(*r > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return usage(format!("split ratios must be positive and sum to 1, got {:?}", self.split));
        }
        let e = &self.explain;
        if e.n_samples < LIME_MIN_SAMPLES {
            return usage(format!("n_samples must be >= {LIME_MIN_SAMPLES}, got {}", e.n_samples));
        }
        if e.n_permutations == 0 || e.background_size == 0 || e.n_repeats == 0 {
            return usage("n_permutations, background_size and n_repeats must be >= 1".into());
        }
        if let Some(kw) = e.kernel_width {
            if !(kw > 0.0) || !kw.is_finite() {
                return usage(format!("kernel_width must be positive, got {kw}"));
            }
        }
        if let Some(s) = &self.data.synth {
            if s.n == 0 || s.points < 2 || !(s.dt > 0.0) {
                return usage("synth needs n >= 1, points >= 2 and dt > 0".into());
            }
        }
        if let Some(schema) = &self.data.schema {
            trajxai_core::trajectory::CsvSchema::parse_mapping(schema)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"model": {"hidden": 8}, "explain": {"component": "dlon"}}"#).unwrap();
        assert_eq!(cfg.model.hidden, 8);
        assert_eq!(cfg.model.window, 12);
        assert_eq!(cfg.explain.component, Component::Dlon);
        assert_eq!(cfg.explain.background_size, 100);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle": {}}"#).is_err());
        let cfg = RunConfig {
            split: [0.5, 0.5, 0.5],
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
        let mut cfg = RunConfig::default();
        cfg.explain.n_samples = 10;
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig {
            data: DataSource {
                synth: Some(SynthSpec::default()),
                ..DataSource::default()
            },
            ..RunConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
