use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use trajxai_core::explainers::{
    agreement, explain_attention, explain_lime, explain_saliency, explain_shap_sampling,
    permutation_feature_importance, select_background, EvalSet,
    ExplanationExport,
};
use trajxai_core::forecaster::{forward, init_model, load_checkpoint, save_checkpoint, train};
use trajxai_core::render::{
    export_geojson, render_bars, render_heatmap, render_importance_trajectory, render_overlay,
};
use trajxai_core::trajectory::{
    build_dataset, parse_ais_csv, reconstruct_position, synth_fleet, write_ais_csv, CsvSchema,
    SplitName, Trajectory,
};
use trajxai_core::{Dataset, DeltaSample, Feature, Matrix, ModelParams, TrajectoryPoint};

use crate::config::{
    RunConfig, SynthSpec, CHECKPOINT_FILE, DATA_FILE, DEFAULT_OUT, OUT_ENV, RUN_CONFIG_FILE,
};
use crate::eval::evaluate;
use crate::{CliError, Command, Common, ExplainArgs, Method, ModelArgs, What};

type CliResult<T> = Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Resolved settings shared by every subcommand.
struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    force: bool,
}

impl Ctx {
    /// Output directory: flag, then config, then `$TRAJXAI_OUT`, then the
    /// built-in default. Without `--config`, a `run.json` left in the output
    /// directory by `train` serves as the config.
    fn resolve(common: &Common) -> CliResult<(Self, Option<usize>)> {
        let env_out = std::env::var_os(OUT_ENV).map(PathBuf::from);
        let fallback = || env_out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let cfg = match &common.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let dir = common.out.clone().unwrap_or_else(fallback);
                let implicit = dir.join(RUN_CONFIG_FILE);
                if implicit.is_file() {
                    RunConfig::load(&implicit)?
                } else {
                    RunConfig::default()
                }
            }
        };
        let out = common
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .unwrap_or_else(fallback);
        if common.workers == Some(0) {
            return usage("--workers must be >= 1");
        }
        Ok((
            Self {
                cfg,
                out,
                force: common.force,
            },
            common.workers,
        ))
    }

    /// Claims output file names, refusing to clobber without `--force`.
    fn plan(&self, names: &[String]) -> CliResult<Vec<PathBuf>> {
        let paths: Vec<PathBuf> = names.iter().map(|n| self.out.join(n)).collect();
        if !self.force {
            let existing: Vec<String> = paths
                .iter()
                .filter(|p| p.exists())
                .map(|p| p.display().to_string())
                .collect();
            if !existing.is_empty() {
                return usage(format!(
                    "refusing to overwrite {} (pass --force)",
                    existing.join(", ")
                ));
            }
        }
        Ok(paths)
    }

    fn write(&self, path: &Path, contents: &str) -> CliResult<()> {
        fs::create_dir_all(&self.out)?;
        fs::write(path, contents)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> CliResult<()> {
        self.write(path, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn data_path(&self, flag: &Option<PathBuf>) -> Option<(PathBuf, CsvSchema)> {
        let schema = || {
            self.cfg
                .data
                .schema
                .as_deref()
                .map(|s| CsvSchema::parse_mapping(s).expect("validated"))
                .unwrap_or_default()
        };
        if let Some(p) = flag {
            return Some((p.clone(), schema()));
        }
        if let Some(p) = &self.cfg.data.csv {
            return Some((p.clone(), schema()));
        }
        if self.cfg.data.synth.is_some() {
            return None;
        }
        Some((self.out.join(DATA_FILE), CsvSchema::default()))
    }

    fn trajectories(&self, flag: &Option<PathBuf>) -> CliResult<Vec<Trajectory>> {
        match self.data_path(flag) {
            Some((path, schema)) => {
                if !path.is_file() {
                    return Err(CliError::Runtime(format!(
                        "no trajectory data at {} (run `synth` or `ingest` first, or pass --data)",
                        path.display()
                    )));
                }
                Ok(parse_ais_csv(fs::File::open(&path)?, &schema)?)
            }
            None => {
                let s = self.cfg.data.synth.as_ref().expect("synth source");
                Ok(synth_fleet(s.kind, &s.params, s.n, s.points, s.dt, s.seed)?)
            }
        }
    }

    fn dataset(&self, flag: &Option<PathBuf>, window: usize) -> CliResult<Dataset> {
        let trajs = self.trajectories(flag)?;
        Ok(build_dataset(&trajs, window, self.cfg.split, self.cfg.split_seed)?)
    }

    fn checkpoint(&self, flag: &Option<PathBuf>) -> CliResult<ModelParams> {
        let path = flag.clone().unwrap_or_else(|| self.out.join(CHECKPOINT_FILE));
        Ok(load_checkpoint(path)?)
    }

    fn apply_explain(&mut self, a: &ExplainArgs) {
        let e = &mut self.cfg.explain;
        if let Some(c) = a.component {
            e.component = c.into();
        }
        if let Some(v) = a.n_samples {
            e.n_samples = v;
        }
        if a.kernel_width.is_some() {
            e.kernel_width = a.kernel_width;
        }
        if let Some(v) = a.n_permutations {
            e.n_permutations = v;
        }
        if let Some(v) = a.background_size {
            e.background_size = v;
        }
        if let Some(v) = a.n_repeats {
            e.n_repeats = v;
        }
        if let Some(m) = a.metric {
            e.metric = m.into();
        }
        if let Some(s) = a.seed {
            e.seed = s;
        }
    }
}

pub(crate) fn dispatch(command: Command) -> CliResult<Value> {
    let common = match &command {
        Command::Synth { common, .. }
        | Command::Ingest { common, .. }
        | Command::Train { common, .. }
        | Command::Predict { common, .. }
        | Command::Explain { common, .. }
        | Command::Render { common, .. }
        | Command::Eval { common, .. }
        | Command::Agree { common, .. } => common.clone(),
    };
    let (ctx, workers) = Ctx::resolve(&common)?;
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(|| run_command(ctx, command)),
        None => run_command(ctx, command),
    }
}

fn run_command(mut ctx: Ctx, command: Command) -> CliResult<Value> {
    match command {
        Command::Synth {
            kind,
            n,
            points,
            dt,
            seed,
            noise,
            ..
        } => {
            let mut spec = ctx.cfg.data.synth.clone().unwrap_or_default();
            if let Some(k) = kind {
                spec.kind = k.into();
            }
            if let Some(v) = n {
                spec.n = v;
            }
            if let Some(v) = points {
                spec.points = v;
            }
            if let Some(v) = dt {
                spec.dt = v;
            }
            if let Some(v) = seed {
                spec.seed = v;
            }
            if let Some(v) = noise {
                spec.params.position_noise = v;
            }
            ctx.cfg.data.synth = Some(spec.clone());
            ctx.cfg.validate()?;
            if !(spec.params.position_noise >= 0.0) {
                return usage("--noise must be >= 0");
            }
            synth(&ctx, &spec)
        }
        Command::Ingest { csv, schema, .. } => {
            if let Some(s) = schema {
                ctx.cfg.data.schema = Some(s);
            }
            ctx.cfg.validate()?;
            let Some(csv) = csv.or_else(|| ctx.cfg.data.csv.clone()) else {
                return usage("ingest needs --csv (or data.csv in the config)");
            };
            ingest(&ctx, &csv)
        }
        Command::Train {
            data,
            window,
            hidden,
            attn_dim,
            lr,
            epochs,
            batch,
            seed,
            split_seed,
            ..
        } => {
            let m = &mut ctx.cfg.model;
            if let Some(v) = window {
                m.window = v;
            }
            if let Some(v) = hidden {
                m.hidden = v;
            }
            if let Some(v) = attn_dim {
                m.attn_dim = v;
            }
            if let Some(v) = lr {
                m.lr = v;
            }
            if let Some(v) = epochs {
                m.epochs = v;
            }
            if let Some(v) = batch {
                m.batch = v;
            }
            if let Some(v) = seed {
                m.seed = v;
            }
            if let Some(v) = split_seed {
                ctx.cfg.split_seed = v;
            }
            if let Some(d) = &data {
                ctx.cfg.data.csv = Some(d.clone());
            }
            ctx.cfg.validate()?;
            train_cmd(&ctx, &data)
        }
        Command::Predict {
            instance, model, ..
        } => {
            ctx.cfg.validate()?;
            predict(&ctx, instance, &model)
        }
        Command::Explain {
            method,
            instance,
            model,
            explain,
            ..
        } => {
            ctx.apply_explain(&explain);
            ctx.cfg.validate()?;
            explain_cmd(&ctx, method, instance, &model)
        }
        Command::Render {
            what,
            instance,
            input,
            model,
            ..
        } => {
            ctx.cfg.validate()?;
            render_cmd(&ctx, what, instance, input, &model)
        }
        Command::Eval { model, .. } => {
            ctx.cfg.validate()?;
            eval_cmd(&ctx, &model)
        }
        Command::Agree {
            instance,
            model,
            explain,
            ..
        } => {
            ctx.apply_explain(&explain);
            ctx.cfg.validate()?;
            agree(&ctx, instance, &model)
        }
    }
}

fn file_names(paths: &[PathBuf]) -> Vec<String> {
    paths
        .iter()
        .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        .collect()
}

fn summary(command: &str, ctx: &Ctx, files: &[PathBuf], seeds: Value, result: Value) -> Value {
    json!({
        "command": command,
        "out_dir": ctx.out.display().to_string(),
        "files": file_names(files),
        "seeds": seeds,
        "result": result,
    })
}

fn synth(ctx: &Ctx, spec: &SynthSpec) -> CliResult<Value> {
    let paths = ctx.plan(&[DATA_FILE.to_string()])?;
    let trajs = synth_fleet(spec.kind, &spec.params, spec.n, spec.points, spec.dt, spec.seed)?;
    fs::create_dir_all(&ctx.out)?;
    write_ais_csv(fs::File::create(&paths[0])?, &trajs)?;
    Ok(summary(
        "synth",
        ctx,
        &paths,
        json!({ "synth": spec.seed }),
        json!({
            "kind": spec.kind.to_string(),
            "trajectories": trajs.len(),
            "points": trajs.iter().map(Trajectory::len).sum::<usize>(),
        }),
    ))
}

fn ingest(ctx: &Ctx, csv: &Path) -> CliResult<Value> {
    let schema = ctx
        .cfg
        .data
        .schema
        .as_deref()
        .map(CsvSchema::parse_mapping)
        .transpose()
        .map_err(|e| CliError::Usage(e.to_string()))?
        .unwrap_or_default();
    let paths = ctx.plan(&[DATA_FILE.to_string()])?;
    if !csv.is_file() {
        return Err(CliError::Runtime(format!("no such file: {}", csv.display())));
    }
    let trajs = parse_ais_csv(fs::File::open(csv)?, &schema)?;
    fs::create_dir_all(&ctx.out)?;
    write_ais_csv(fs::File::create(&paths[0])?, &trajs)?;
    Ok(summary(
        "ingest",
        ctx,
        &paths,
        json!({}),
        json!({
            "trajectories": trajs.len(),
            "points": trajs.iter().map(Trajectory::len).sum::<usize>(),
        }),
    ))
}

fn train_cmd(ctx: &Ctx, data: &Option<PathBuf>) -> CliResult<Value> {
    let paths = ctx.plan(&[
        CHECKPOINT_FILE.to_string(),
        "train_report.json".to_string(),
        RUN_CONFIG_FILE.to_string(),
    ])?;
    let cfg = &ctx.cfg.model;
    let ds = ctx.dataset(data, cfg.window)?;
    let (model, report) = train(&init_model(cfg)?, &ds, cfg)?;
    save_checkpoint(&model, &paths[0])?;
    ctx.write_json(&paths[1], &report)?;
    let mut resolved = ctx.cfg.clone();
    resolved.out = None;
    ctx.write_json(&paths[2], &resolved)?;
    Ok(summary(
        "train",
        ctx,
        &paths,
        json!({ "model": cfg.seed, "split": ctx.cfg.split_seed }),
        json!({
            "train_samples": ds.split.train.len(),
            "validation_samples": ds.split.validation.len(),
            "test_samples": ds.split.test.len(),
            "final_train_loss": report.epoch_losses.last(),
            "validation_loss": report.validation_loss,
            "baseline_validation_loss": report.baseline_validation_loss,
        }),
    ))
}

/// Checkpoint, dataset built with the checkpoint's window, and one split.
struct Loaded {
    model: ModelParams,
    data: Dataset,
    split: SplitName,
}

impl Loaded {
    fn new(ctx: &Ctx, args: &ModelArgs) -> CliResult<Self> {
        let model = ctx.checkpoint(&args.checkpoint)?;
        let data = ctx.dataset(&args.data, model.window())?;
        Ok(Self {
            model,
            data,
            split: args.split.into(),
        })
    }

    fn samples(&self) -> Vec<&DeltaSample> {
        self.data.split_samples(self.split)
    }

    fn instance(&self, i: usize) -> CliResult<&DeltaSample> {
        let samples = self.samples();
        match samples.get(i) {
            Some(s) => Ok(s),
            None => usage(format!(
                "instance {i} out of range: {} split has {} windows",
                split_name(self.split),
                samples.len()
            )),
        }
    }

    /// Dataset index of the `i`-th window of the split.
    fn global_index(&self, i: usize) -> usize {
        self.data.split.indices(self.split)[i]
    }
}

fn split_name(s: SplitName) -> &'static str {
    match s {
        SplitName::Train => "train",
        SplitName::Validation => "validation",
        SplitName::Test => "test",
    }
}

fn point_json(p: &TrajectoryPoint) -> Value {
    json!([p.lon, p.lat, p.t])
}

fn predict(ctx: &Ctx, instance: usize, args: &ModelArgs) -> CliResult<Value> {
    let loaded = Loaded::new(ctx, args)?;
    let sample = loaded.instance(instance)?;
    let paths = ctx.plan(&[format!("prediction_{instance}.json")])?;
    let pred = forward(&loaded.model, &sample.inputs, false)?;
    let at = reconstruct_position(&sample.anchor, pred.delta, Some(sample.horizon()))?;
    let actual = sample.target_point()?;
    let err = trajxai_core::trajectory::haversine_m(&at, &actual);
    let doc = json!({
        "instance": instance,
        "split": split_name(loaded.split),
        "vessel_id": sample.vessel_id,
        "anchor": point_json(&sample.anchor),
        "predicted_delta": pred.delta,
        "predicted_point": point_json(&at),
        "actual_delta": sample.target,
        "actual_point": point_json(&actual),
        "error_m": err,
        "attention": pred.attention,
    });
    ctx.write_json(&paths[0], &doc)?;
    Ok(summary(
        "predict",
        ctx,
        &paths,
        json!({ "model": loaded.model.config.seed, "split": ctx.cfg.split_seed }),
        json!({ "predicted_point": doc["predicted_point"], "error_m": err }),
    ))
}

fn row_labels(t: usize) -> Vec<String> {
    (0..t).map(|j| format!("t-{}", t - 1 - j)).collect()
}

fn col_labels() -> Vec<String> {
    Feature::ALL.iter().map(|f| f.name().to_string()).collect()
}

fn file_set(method: Method, instance: usize) -> Vec<String> {
    let m = method.name();
    let figure = if method == Method::Attention { "bars" } else { "heatmap" };
    vec![
        format!("{m}_{instance}.json"),
        format!("{m}_{figure}_{instance}.svg"),
        format!("{m}_highlight_{instance}.svg"),
        format!("{m}_{instance}.geojson"),
    ]
}

fn annotate(export: &mut ExplanationExport, instance: usize, split: SplitName, sample: &DeltaSample) {
    let pts: Vec<Value> = sample.window_points().iter().map(point_json).collect();
    export.meta.insert("instance".into(), json!(instance));
    export.meta.insert("split".into(), json!(split_name(split)));
    export.meta.insert("vessel_id".into(), json!(sample.vessel_id));
    export.meta.insert("window_points".into(), Value::Array(pts));
}

/// Writes an explanation JSON with its figure, highlighted route and GeoJSON.
fn emit(
    ctx: &Ctx,
    paths: &[PathBuf],
    method: Method,
    export: &ExplanationExport,
    sample: &DeltaSample,
) -> CliResult<()> {
    let spec = &ctx.cfg.render;
    ctx.write_json(&paths[0], export)?;
    let label = method.name().to_uppercase();
    let figure = if method == Method::Attention {
        let values: Vec<f64> = serde_json::from_value(export.values.clone())?;
        render_bars(&values, &row_labels(values.len()), "Attention weight per timestep", spec)?
    } else {
        let m = export
            .values_matrix()
            .ok_or_else(|| CliError::Runtime("explanation values are not a grid".into()))?;
        render_heatmap(&m, &row_labels(m.rows()), &col_labels(), &format!("{label} attribution"), spec)?
    };
    ctx.write(&paths[1], &figure)?;
    let per_t = export.per_timestep.clone().unwrap_or_default();
    let window = sample.window_points();
    ctx.write(&paths[2], &render_importance_trajectory(&window, &per_t, &label, spec)?)?;
    let geo = export_geojson(&window, Some(&per_t), None)?;
    ctx.write_json(&paths[3], &geo)?;
    Ok(())
}

/// Runs one per-instance explainer and returns its export.
fn explain_one(
    ctx: &Ctx,
    loaded: &Loaded,
    method: Method,
    instance: usize,
    x: &Matrix,
) -> CliResult<ExplanationExport> {
    let e = &ctx.cfg.explain;
    let model = &loaded.model;
    let export = match method {
        Method::Lime => ExplanationExport::from_lime(&explain_lime(
            model,
            x,
            e.component,
            e.n_samples,
            e.kernel_width,
            e.seed,
        )?),
        Method::Saliency => ExplanationExport::from_saliency(&explain_saliency(model, x)?, e.component),
        Method::Attention => ExplanationExport::from_attention(&explain_attention(model, x)?),
        Method::Shap => {
            let train = loaded.data.split_samples(SplitName::Train);
            let bg = select_background(&train, e.background_size, &model.standardization, e.seed)?;
            ExplanationExport::from_shap(&explain_shap_sampling(
                model,
                x,
                &bg,
                e.component,
                e.n_permutations,
                e.seed,
            )?)
        }
        Method::Pfi => unreachable!("pfi is split-level"),
    };
    let mut export = export;
    annotate(&mut export, instance, loaded.split, loaded.instance(instance)?);
    Ok(export)
}

fn explain_seeds(ctx: &Ctx, model: &ModelParams) -> Value {
    json!({
        "explain": ctx.cfg.explain.seed,
        "model": model.config.seed,
        "split": ctx.cfg.split_seed,
    })
}

fn explain_cmd(
    ctx: &Ctx,
    method: Method,
    instance: Option<usize>,
    args: &ModelArgs,
) -> CliResult<Value> {
    if method == Method::Pfi {
        let split = split_name(args.split.into());
        let paths = ctx.plan(&[format!("pfi_{split}.json"), format!("pfi_bars_{split}.svg")])?;
        let loaded = Loaded::new(ctx, args)?;
        let e = &ctx.cfg.explain;
        let data = EvalSet::from_samples(&loaded.samples(), &loaded.model.standardization)?;
        let report = permutation_feature_importance(&loaded.model, &data, e.metric, e.n_repeats, e.seed)?;
        let mut export = ExplanationExport::from_pfi(&report);
        export.meta.insert("split".into(), json!(split));
        ctx.write_json(&paths[0], &export)?;
        let means: Vec<f64> = report.features.iter().map(|f| f.mean_importance).collect();
        let title = format!("Permutation feature importance ({})", report.metric_name);
        ctx.write(&paths[1], &render_bars(&means, &col_labels(), &title, &ctx.cfg.render)?)?;
        let ranking: Vec<&str> = report.ranking().iter().map(|f| f.name()).collect();
        return Ok(summary(
            "explain",
            ctx,
            &paths,
            explain_seeds(ctx, &loaded.model),
            json!({ "method": "pfi", "metric": report.metric_name.name(), "ranking": ranking }),
        ));
    }
    let Some(instance) = instance else {
        return usage(format!("--instance is required for --method {}", method.name()));
    };
    let paths = ctx.plan(&file_set(method, instance))?;
    let loaded = Loaded::new(ctx, args)?;
    let sample = loaded.instance(instance)?;
    let x = loaded.model.standardize(&sample.inputs)?;
    let export = explain_one(ctx, &loaded, method, instance, &x)?;
    emit(ctx, &paths, method, &export, sample)?;
    Ok(summary(
        "explain",
        ctx,
        &paths,
        explain_seeds(ctx, &loaded.model),
        json!({
            "method": method.name(),
            "component": export.component,
            "instance": instance,
            "per_timestep": export.per_timestep,
        }),
    ))
}

const AGREE_METHODS: [Method; 4] = [Method::Attention, Method::Saliency, Method::Lime, Method::Shap];

fn agree(ctx: &Ctx, instance: usize, args: &ModelArgs) -> CliResult<Value> {
    let mut names: Vec<String> = AGREE_METHODS.iter().flat_map(|m| file_set(*m, instance)).collect();
    names.push(format!("agreement_{instance}.json"));
    names.push(format!("agreement_heatmap_{instance}.svg"));
    let paths = ctx.plan(&names)?;
    let loaded = Loaded::new(ctx, args)?;
    let sample = loaded.instance(instance)?;
    let x = loaded.model.standardize(&sample.inputs)?;

    let mut vectors = Vec::new();
    for (k, method) in AGREE_METHODS.iter().enumerate() {
        let export = explain_one(ctx, &loaded, *method, instance, &x)?;
        emit(ctx, &paths[4 * k..4 * k + 4], *method, &export, sample)?;
        vectors.push((method.name().to_string(), export.per_timestep.unwrap_or_default()));
    }
    let matrix = agreement(&vectors)?;
    let mut per_timestep = Map::new();
    for (name, v) in &vectors {
        per_timestep.insert(name.clone(), json!(v));
    }
    let doc = json!({
        "instance": instance,
        "split": split_name(loaded.split),
        "component": ctx.cfg.explain.component.name(),
        "methods": matrix.methods,
        "rho": (0..matrix.rho.rows()).map(|r| matrix.rho.row(r).to_vec()).collect::<Vec<_>>(),
        "per_timestep": per_timestep,
    });
    let n = AGREE_METHODS.len();
    ctx.write_json(&paths[4 * n], &doc)?;
    let svg = render_heatmap(
        &matrix.rho,
        &matrix.methods,
        &matrix.methods,
        "Spearman agreement of per-timestep importance",
        &ctx.cfg.render,
    )?;
    ctx.write(&paths[4 * n + 1], &svg)?;
    Ok(summary(
        "agree",
        ctx,
        &paths,
        explain_seeds(ctx, &loaded.model),
        json!({ "methods": doc["methods"], "rho": doc["rho"] }),
    ))
}

fn eval_cmd(ctx: &Ctx, args: &ModelArgs) -> CliResult<Value> {
    let split = split_name(args.split.into());
    let paths = ctx.plan(&[format!("eval_{split}.json")])?;
    let loaded = Loaded::new(ctx, args)?;
    let report = evaluate(&loaded.model, &loaded.samples(), &loaded.model.standardization)?;
    let doc = json!({ "split": split, "report": report });
    ctx.write_json(&paths[0], &doc)?;
    Ok(summary(
        "eval",
        ctx,
        &paths,
        json!({ "model": loaded.model.config.seed, "split": ctx.cfg.split_seed }),
        serde_json::to_value(&report)?,
    ))
}

/// One-step-ahead forecasts along the whole trajectory holding the window.
fn overlay_routes(loaded: &Loaded, instance: usize) -> CliResult<(Vec<TrajectoryPoint>, Vec<TrajectoryPoint>)> {
    let traj = loaded.data.trajectory_of[loaded.global_index(instance)];
    let members: Vec<&DeltaSample> = loaded
        .data
        .samples
        .iter()
        .zip(&loaded.data.trajectory_of)
        .filter(|(_, t)| **t == traj)
        .map(|(s, _)| s)
        .collect();
    let mut actual = members[0].window_points();
    let mut predicted = vec![members[0].anchor];
    for s in &members {
        actual.push(s.target_point()?);
        let pred = forward(&loaded.model, &s.inputs, false)?;
        predicted.push(reconstruct_position(&s.anchor, pred.delta, Some(s.horizon()))?);
    }
    Ok((actual, predicted))
}

fn render_cmd(
    ctx: &Ctx,
    what: What,
    instance: Option<usize>,
    input: Option<PathBuf>,
    args: &ModelArgs,
) -> CliResult<Value> {
    let spec = &ctx.cfg.render;
    if what == What::Overlay {
        let Some(instance) = instance else {
            return usage("--instance is required for --what overlay");
        };
        let paths = ctx.plan(&[format!("overlay_{instance}.svg"), format!("overlay_{instance}.geojson")])?;
        let loaded = Loaded::new(ctx, args)?;
        loaded.instance(instance)?;
        let (actual, predicted) = overlay_routes(&loaded, instance)?;
        ctx.write(&paths[0], &render_overlay(&actual, &predicted, spec)?)?;
        ctx.write_json(&paths[1], &export_geojson(&actual, None, Some(&predicted))?)?;
        return Ok(summary(
            "render",
            ctx,
            &paths,
            json!({ "model": loaded.model.config.seed, "split": ctx.cfg.split_seed }),
            json!({ "what": "overlay", "instance": instance, "points": actual.len() }),
        ));
    }

    let Some(input) = input else {
        return usage("--input <explanation.json> is required for highlight, bars and heatmap");
    };
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "figure".into());
    let what_name = match what {
        What::Highlight => "highlight",
        What::Bars => "bars",
        What::Heatmap => "heatmap",
        What::Overlay => unreachable!(),
    };
    let paths = ctx.plan(&[format!("{stem}_{what_name}.svg")])?;
    let text = fs::read_to_string(&input)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", input.display())))?;
    let export: ExplanationExport = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("{} is not an explanation export: {e}", input.display())))?;
    let title = format!("{} attribution", export.method.to_uppercase());
    let svg = match what {
        What::Highlight => {
            let pts: Vec<[f64; 3]> = export
                .meta
                .get("window_points")
                .cloned()
                .map(serde_json::from_value)
                .transpose()?
                .ok_or_else(|| CliError::Runtime("explanation has no window_points".into()))?;
            let pts: Vec<TrajectoryPoint> =
                pts.iter().map(|p| TrajectoryPoint { lon: p[0], lat: p[1], t: p[2] }).collect();
            let per_t = export
                .per_timestep
                .clone()
                .ok_or_else(|| CliError::Runtime("explanation has no per-timestep importance".into()))?;
            render_importance_trajectory(&pts, &per_t, &export.method.to_uppercase(), spec)?
        }
        What::Bars => {
            let values: Vec<f64> = match export.values_matrix() {
                Some(m) => per_timestep_rows(&m),
                None => serde_json::from_value(export.values.clone())?,
            };
            let labels: Vec<String> = match export.meta.get("features") {
                Some(f) if export.method == "pfi" => serde_json::from_value(f.clone())?,
                _ => row_labels(values.len()),
            };
            render_bars(&values, &labels, &title, spec)?
        }
        What::Heatmap => {
            let m = export
                .values_matrix()
                .ok_or_else(|| CliError::Runtime("explanation values are not a grid".into()))?;
            render_heatmap(&m, &row_labels(m.rows()), &col_labels(), &title, spec)?
        }
        What::Overlay => unreachable!(),
    };
    ctx.write(&paths[0], &svg)?;
    Ok(summary(
        "render",
        ctx,
        &paths,
        json!({}),
        json!({ "what": what_name, "input": input.display().to_string() }),
    ))
}

/// Signed row sums, for drawing a grid explanation as per-timestep bars.
fn per_timestep_rows(m: &Matrix) -> Vec<f64> {
    (0..m.rows()).map(|r| m.row(r).iter().sum()).collect()
}
