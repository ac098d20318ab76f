use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use trajxai_core::forecaster::persistence_baseline;
use trajxai_core::trajectory::{haversine_m, reconstruct_position, Standardization};
use trajxai_core::{BlackBox, DeltaSample, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Halved mean squared error in standardized target units.
    pub mse: f64,
    pub mean_haversine_m: f64,
    pub median_haversine_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub model: Metrics,
    /// Repeat-the-last-step forecast scored the same way.
    pub baseline: Metrics,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scores standardized `(Δlat, Δlon)` predictions against the samples.
pub fn score(
    preds_std: &[[f64; 2]],
    samples: &[&DeltaSample],
    stats: &Standardization,
) -> Result<Metrics> {
    let n = samples.len() as f64;
    let mut sq = 0.0;
    let mut dists = Vec::with_capacity(samples.len());
    for (p, s) in preds_std.iter().zip(samples) {
        let y = stats.target_to_std(s.target);
        sq += (p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2);
        let at = reconstruct_position(&s.anchor, stats.target_from_std(*p), None)?;
        dists.push(haversine_m(&at, &s.target_point()?));
    }
    Ok(Metrics {
        mse: sq / (2.0 * n),
        mean_haversine_m: dists.iter().sum::<f64>() / n,
        median_haversine_m: median(dists),
    })
}

pub fn evaluate<B: BlackBox + ?Sized>(
    model: &B,
    samples: &[&DeltaSample],
    stats: &Standardization,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let preds: Vec<[f64; 2]> = samples
        .par_iter()
        .map(|s| {
            let y = model.predict(stats.apply(&s.inputs).as_slice())?;
            if y.iter().all(|v| v.is_finite()) {
                Ok(y)
            } else {
                Err(Error::NonFinite("model output".into()))
            }
        })
        .collect::<Result<_>>()?;
    let base: Vec<[f64; 2]> = samples
        .iter()
        .map(|s| stats.target_to_std(persistence_baseline(s)))
        .collect();
    Ok(EvalReport {
        n_samples: samples.len(),
        model: score(&preds, samples, stats)?,
        baseline: score(&base, samples, stats)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use trajxai_core::trajectory::{build_dataset, synth_fleet, SplitName, SynthKind, SynthParams};
    use trajxai_core::Dataset;

    fn data() -> Dataset {
        let params = SynthParams {
            position_noise: 2e-4,
            ..SynthParams::default()
        };
        let trajs = synth_fleet(SynthKind::Arc, &params, 10, 20, 60.0, 3).unwrap();
        build_dataset(&trajs, 5, [0.6, 0.2, 0.2], 3).unwrap()
    }

    /// Echoes the last standardized step, which is persistence in disguise.
    struct Persistence;

    impl BlackBox for Persistence {
        fn input_shape(&self) -> (usize, usize) {
            (5, 4)
        }
        fn predict(&self, x: &[f64]) -> Result<[f64; 2]> {
            Ok([x[4 * 4 + 1], x[4 * 4]])
        }
    }

    /// Looks each input up in a table of true standardized targets.
    struct Oracle(HashMap<Vec<u64>, [f64; 2]>);

    impl BlackBox for Oracle {
        fn input_shape(&self) -> (usize, usize) {
            (5, 4)
        }
        fn predict(&self, x: &[f64]) -> Result<[f64; 2]> {
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            Ok(self.0[&key])
        }
    }

    #[test]
    fn persistence_model_matches_baseline() {
        let ds = data();
        let test = ds.split_samples(SplitName::Test);
        let r = evaluate(&Persistence, &test, &ds.standardization).unwrap();
        assert!((r.model.mse - r.baseline.mse).abs() <= 1e-12);
        assert!((r.model.mean_haversine_m - r.baseline.mean_haversine_m).abs() <= 1e-12);
        assert!((r.model.median_haversine_m - r.baseline.median_haversine_m).abs() <= 1e-12);
    }

    #[test]
    fn oracle_has_zero_displacement() {
        let ds = data();
        let stats = &ds.standardization;
        let test = ds.split_samples(SplitName::Test);
        let table = test
            .iter()
            .map(|s| {
                let key = stats.apply(&s.inputs).as_slice().iter().map(|v| v.to_bits()).collect();
                (key, stats.target_to_std(s.target))
            })
            .collect();
        let r = evaluate(&Oracle(table), &test, stats).unwrap();
        assert!(r.model.mean_haversine_m < 1e-6);
        assert!(r.model.mse < 1e-20);
        assert!(r.baseline.mean_haversine_m > 0.0);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
