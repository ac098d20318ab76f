use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{forward_standardized, loss_and_gradients_standardized};
use super::{ModelConfig, ModelParams, Weights};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamConfig, AdamState, Matrix, RngStream};
use crate::trajectory::{Dataset, DeltaSample, Feature, SplitName, Standardization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training MSE per epoch (standardized units).
    pub epoch_losses: Vec<f64>,
    pub validation_loss: f64,
    /// Validation MSE of repeating the last observed step.
    pub baseline_validation_loss: f64,
}

/// Repeat-the-last-step forecast in degrees, reordered to `(Δlat, Δlon)`.
pub fn persistence_baseline(sample: &DeltaSample) -> [f64; 2] {
    let last = sample.inputs.row(sample.window() - 1);
    [last[Feature::DLat.index()], last[Feature::DLon.index()]]
}

fn standardized_pairs(
    data: &Dataset,
    which: SplitName,
    stats: &Standardization,
) -> Vec<(Matrix, [f64; 2])> {
    data.split_samples(which)
        .into_iter()
        .map(|s| (stats.apply(&s.inputs), stats.target_to_std(s.target)))
        .collect()
}

pub(crate) fn mse_on(weights: &Weights, pairs: &[(Matrix, [f64; 2])]) -> Result<f64> {
    let errs: Vec<f64> = pairs
        .par_iter()
        .map(|(x, y)| {
            let out = forward_standardized(weights, x)?.output;
            Ok((out[0] - y[0]).powi(2) + (out[1] - y[1]).powi(2))
        })
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / (2.0 * pairs.len() as f64))
}

/// Mini-batch Adam on the training split.
///
/// The returned parameters carry the dataset's standardization. Each epoch
/// visits the training samples in an order drawn from `config.seed`.
pub fn train(
    params: &ModelParams,
    data: &Dataset,
    config: &ModelConfig,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    if data.split.train.is_empty() || data.split.validation.is_empty() {
        return Err(Error::Empty("training or validation split"));
    }
    if data.window() != params.config.window {
        return Err(Error::Shape(format!(
            "dataset window {} but model window {}",
            data.window(),
            params.config.window
        )));
    }
    let stats = &data.standardization;
    let train_pairs = standardized_pairs(data, SplitName::Train, stats);
    let val_pairs = standardized_pairs(data, SplitName::Validation, stats);

    let mut model = params.clone();
    model.standardization = stats.clone();
    model.config.lr = config.lr;
    model.config.epochs = config.epochs;
    model.config.batch = config.batch;
    model.config.seed = config.seed;

    let adam = AdamConfig::with_lr(config.lr);
    let mut flat = model.weights.flatten();
    let mut state = AdamState::new(flat.len());
    let shuffle_root = RngStream::new(config.seed).derive("epoch-shuffle");
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        shuffle_root.derive_indexed("epoch", epoch as u64).shuffle(&mut order);
        let mut weighted_loss = 0.0;
        for chunk in order.chunks(config.batch) {
            let batch: Vec<(Matrix, [f64; 2])> =
                chunk.iter().map(|&i| train_pairs[i].clone()).collect();
            let lg = loss_and_gradients_standardized(&model.weights, &batch)?;
            weighted_loss += lg.mse * chunk.len() as f64;
            adam_step(&mut flat, &lg.grads.flatten(), &mut state, &adam)?;
            model.weights.assign_flat(&flat)?;
        }
        epoch_losses.push(weighted_loss / train_pairs.len() as f64);
    }

    let validation_loss = mse_on(&model.weights, &val_pairs)?;
    let baseline_validation_loss = data
        .split_samples(SplitName::Validation)
        .iter()
        .map(|s| {
            let p = stats.target_to_std(persistence_baseline(s));
            let y = stats.target_to_std(s.target);
            (p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2)
        })
        .sum::<f64>()
        / (2.0 * val_pairs.len() as f64);

    Ok((
        model,
        TrainReport {
            epoch_losses,
            validation_loss,
            baseline_validation_loss,
        },
    ))
}
