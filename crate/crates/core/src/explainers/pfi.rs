use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{predict_all, BlackBox};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use crate::trajectory::{
    haversine_m, reconstruct_position, DeltaSample, Feature, Standardization, TrajectoryPoint,
    N_FEATURES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PfiMetric {
    /// Mean squared error in standardized target units, halved like the loss.
    #[default]
    Mse,
    /// Mean great-circle error of the reconstructed position, in meters.
    HaversineM,
}

impl PfiMetric {
    pub fn name(self) -> &'static str {
        match self {
            PfiMetric::Mse => "mse",
            PfiMetric::HaversineM => "haversine_m",
        }
    }
}

impl fmt::Display for PfiMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PfiMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(PfiMetric::Mse),
            "haversine_m" | "haversine" => Ok(PfiMetric::HaversineM),
            other => Err(Error::UnknownKind(format!(
                "metric `{other}` (expected mse or haversine_m)"
            ))),
        }
    }
}

/// A split prepared for scoring: standardized inputs plus what each metric
/// needs to compare against.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub inputs: Vec<Matrix>,
    pub targets_std: Vec<[f64; 2]>,
    pub anchors: Vec<TrajectoryPoint>,
    pub target_points: Vec<TrajectoryPoint>,
    pub standardization: Standardization,
}

impl EvalSet {
    pub fn from_samples(samples: &[&DeltaSample], stats: &Standardization) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("evaluation split"));
        }
        Ok(Self {
            inputs: samples.iter().map(|s| stats.apply(&s.inputs)).collect(),
            targets_std: samples.iter().map(|s| stats.target_to_std(s.target)).collect(),
            anchors: samples.iter().map(|s| s.anchor).collect(),
            target_points: samples
                .iter()
                .map(|s| s.target_point())
                .collect::<Result<_>>()?,
            standardization: stats.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn score(&self, preds: &[[f64; 2]], metric: PfiMetric) -> Result<f64> {
        let n = preds.len() as f64;
        match metric {
            PfiMetric::Mse => Ok(preds
                .iter()
                .zip(&self.targets_std)
                .map(|(p, y)| (p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2))
                .sum::<f64>()
                / (2.0 * n)),
            PfiMetric::HaversineM => {
                let mut total = 0.0;
                for ((p, anchor), target) in preds.iter().zip(&self.anchors).zip(&self.target_points) {
                    let delta = self.standardization.target_from_std(*p);
                    let at = reconstruct_position(anchor, delta, None)?;
                    total += haversine_m(&at, target);
                }
                Ok(total / n)
            }
        }
    }

    /// Metric of the model on this set.
    pub fn evaluate<B: BlackBox + ?Sized>(&self, model: &B, metric: PfiMetric) -> Result<f64> {
        let flat: Vec<Vec<f64>> = self.inputs.iter().map(|m| m.as_slice().to_vec()).collect();
        self.score(&predict_all(model, &flat)?, metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: Feature,
    pub mean_importance: f64,
    pub std_importance: f64,
    pub n_repeats: usize,
    /// Permuted metric minus baseline, one entry per repeat.
    pub repeats: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfiReport {
    /// In `Δlon, Δlat, Δt_curr, Δt_next` order.
    pub features: Vec<FeatureImportance>,
    pub baseline_metric: f64,
    pub metric_name: PfiMetric,
    pub seed: u64,
}

impl PfiReport {
    /// Features sorted by decreasing mean importance.
    pub fn ranking(&self) -> Vec<Feature> {
        let mut fs: Vec<&FeatureImportance> = self.features.iter().collect();
        fs.sort_by(|a, b| b.mean_importance.total_cmp(&a.mean_importance));
        fs.into_iter().map(|f| f.feature).collect()
    }
}

/// Shuffles one input column jointly over every sample and timestep and
/// reports the metric increase.
pub fn permutation_feature_importance<B: BlackBox + ?Sized>(
    model: &B,
    data: &EvalSet,
    metric: PfiMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<PfiReport> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    if n_repeats == 0 {
        return Err(Error::InvalidArgument("n_repeats must be >= 1".into()));
    }
    let (t, f) = model.input_shape();
    if f != N_FEATURES || data.inputs.iter().any(|m| m.shape() != (t, f)) {
        return Err(Error::Shape(format!("evaluation inputs must all be {t}x{N_FEATURES}")));
    }
    let baseline = data.evaluate(model, metric)?;
    let root = RngStream::new(seed).derive("pfi");
    let flat: Vec<Vec<f64>> = data.inputs.iter().map(|m| m.as_slice().to_vec()).collect();

    let mut features = Vec::with_capacity(N_FEATURES);
    for feature in Feature::ALL {
        let col = feature.index();
        let values: Vec<f64> = flat
            .iter()
            .flat_map(|x| (0..t).map(move |r| x[r * f + col]))
            .collect();
        let mut repeats = Vec::with_capacity(n_repeats);
        for r in 0..n_repeats {
            let mut shuffled = values.clone();
            root.derive_indexed(feature.name(), r as u64).shuffle(&mut shuffled);
            let mut permuted = flat.clone();
            let mut it = shuffled.into_iter();
            for x in permuted.iter_mut() {
                for row in 0..t {
                    x[row * f + col] = it.next().expect("one value per cell");
                }
            }
            let score = data.score(&predict_all(model, &permuted)?, metric)?;
            repeats.push(score - baseline);
        }
        let mean = repeats.iter().sum::<f64>() / n_repeats as f64;
        let var = repeats.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_repeats as f64;
        features.push(FeatureImportance {
            feature,
            mean_importance: mean,
            std_importance: var.sqrt(),
            n_repeats,
            repeats,
        });
    }
    Ok(PfiReport {
        features,
        baseline_metric: baseline,
        metric_name: metric,
        seed,
    })
}
