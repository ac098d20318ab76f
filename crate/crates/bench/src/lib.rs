//! Fixtures shared by the benchmarks.

use trajxai_core::explainers::select_background;
use trajxai_core::forecaster::init_model;
use trajxai_core::trajectory::{build_dataset, synth_fleet, SplitName, SynthKind, SynthParams};
use trajxai_core::{Matrix, ModelConfig, ModelParams};

/// An untrained model at the default size, one standardized test window and
/// a background set drawn from the training split.
pub struct Fixture {
    pub model: ModelParams,
    pub instance: Matrix,
    pub background: Vec<Matrix>,
    pub batch: Vec<(Matrix, [f64; 2])>,
}

pub fn fixture(background_size: usize) -> Fixture {
    let params = SynthParams {
        position_noise: 3e-4,
        ..SynthParams::default()
    };
    let trajs = synth_fleet(SynthKind::Line, &params, 40, 30, 60.0, 0).expect("synthetic fleet");
    let cfg = ModelConfig::default();
    let ds = build_dataset(&trajs, cfg.window, [0.7, 0.15, 0.15], 0).expect("dataset");
    let mut model = init_model(&cfg).expect("model");
    model.standardization = ds.standardization.clone();
    let train = ds.split_samples(SplitName::Train);
    let instance = model.standardize(&ds.split_samples(SplitName::Test)[0].inputs).expect("window");
    let background =
        select_background(&train, background_size, &model.standardization, 0).expect("background");
    let batch = train
        .iter()
        .take(cfg.batch)
        .map(|s| {
            (
                model.standardize(&s.inputs).expect("window"),
                model.standardization.target_to_std(s.target),
            )
        })
        .collect();
    Fixture {
        model,
        instance,
        background,
        batch,
    }
}
