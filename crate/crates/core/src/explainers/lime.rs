use serde::{Deserialize, Serialize};

use super::{check_instance, checked_predict, predict_all, BlackBox};
use crate::error::{Error, Result};
use crate::numerics::{solve_spd, Matrix, RngStream};
use crate::trajectory::Component;

pub const LIME_RIDGE_LAMBDA: f64 = 1e-3;
pub const LIME_MIN_SAMPLES: usize = 50;

/// Local linear surrogate around one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeExplanation {
    /// Component the explanation was requested for.
    pub component: Component,
    /// `T × F` surrogate slopes per component, in standardized units.
    pub coeffs: [Matrix; 2],
    /// Surrogate value at the instance itself.
    pub intercept: [f64; 2],
    pub fidelity_r2: [f64; 2],
    pub kernel_width: f64,
    pub n_samples: usize,
    pub seed: u64,
}

pub fn default_kernel_width(timesteps: usize, features: usize) -> f64 {
    0.75 * ((timesteps * features) as f64).sqrt()
}

/// Weighted ridge regression on Gaussian perturbations of `instance`.
///
/// The design is centred on the instance, so `intercept` is the surrogate's
/// prediction there; only slopes are penalised.
pub fn explain_lime<B: BlackBox + ?Sized>(
    model: &B,
    instance: &Matrix,
    component: Component,
    n_samples: usize,
    kernel_width: Option<f64>,
    seed: u64,
) -> Result<LimeExplanation> {
    check_instance(model, instance)?;
    if n_samples < LIME_MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "LIME needs at least {LIME_MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    let (t, f) = model.input_shape();
    let p = t * f;
    let kw = kernel_width.unwrap_or_else(|| default_kernel_width(t, f));
    if !(kw > 0.0) || !kw.is_finite() {
        return Err(Error::InvalidArgument(format!("kernel width must be positive, got {kw}")));
    }
    checked_predict(model, instance.as_slice())?;

    let x0 = instance.as_slice();
    let mut rng = RngStream::new(seed).derive("lime");
    let noise: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| (0..p).map(|_| rng.normal()).collect())
        .collect();
    let perturbed: Vec<Vec<f64>> = noise
        .iter()
        .map(|d| d.iter().zip(x0).map(|(e, x)| x + e).collect())
        .collect();
    let ys = predict_all(model, &perturbed)?;
    let weights: Vec<f64> = noise
        .iter()
        .map(|d| (-d.iter().map(|e| e * e).sum::<f64>() / (kw * kw)).exp())
        .collect();

    // Normal equations with a leading intercept column.
    let dim = p + 1;
    let mut gram = Matrix::zeros(dim, dim);
    let mut rhs = [vec![0.0; dim], vec![0.0; dim]];
    let mut row = vec![0.0; dim];
    let mut weighted = vec![0.0; dim];
    for ((d, y), w) in noise.iter().zip(&ys).zip(&weights) {
        row[0] = 1.0;
        row[1..].copy_from_slice(d);
        for (dst, v) in weighted.iter_mut().zip(&row) {
            *dst = w * v;
        }
        gram.add_outer(&weighted, &row);
        for c in 0..2 {
            for (r, v) in rhs[c].iter_mut().zip(&row) {
                *r += w * y[c] * v;
            }
        }
    }
    for j in 1..dim {
        let v = gram.get(j, j) + LIME_RIDGE_LAMBDA;
        gram.set(j, j, v);
    }

    let wsum: f64 = weights.iter().sum();
    let mut coeffs = Vec::with_capacity(2);
    let mut intercept = [0.0; 2];
    let mut fidelity_r2 = [0.0; 2];
    for c in 0..2 {
        let beta = solve_spd(&gram, &rhs[c])?;
        let col: Vec<f64> = ys.iter().map(|y| y[c]).collect();
        fidelity_r2[c] = weighted_r2(&noise, &col, &weights, wsum, &beta);
        intercept[c] = beta[0];
        coeffs.push(Matrix::from_vec(t, f, beta[1..].to_vec())?);
    }
    let coeffs: [Matrix; 2] = coeffs.try_into().expect("two components");

    Ok(LimeExplanation {
        component,
        coeffs,
        intercept,
        fidelity_r2,
        kernel_width: kw,
        n_samples,
        seed,
    })
}

/// Weighted R²; a constant response counts as perfectly explained.
fn weighted_r2(design: &[Vec<f64>], y: &[f64], w: &[f64], wsum: f64, beta: &[f64]) -> f64 {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return 1.0;
    }
    let mean = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for ((d, y), w) in design.iter().zip(y).zip(w) {
        let fit = beta[0] + d.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
        ss_res += w * (y - fit).powi(2);
        ss_tot += w * (y - mean).powi(2);
    }
    if !(ss_tot > 0.0) {
        return 1.0;
    }
    1.0 - ss_res / ss_tot
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear(Vec<f64>, Vec<f64>);

    impl BlackBox for Linear {
        fn input_shape(&self) -> (usize, usize) {
            (self.0.len() / 4, 4)
        }
        fn predict(&self, x: &[f64]) -> Result<[f64; 2]> {
            Ok([
                crate::numerics::dot(&self.0, x) + 0.3,
                crate::numerics::dot(&self.1, x) - 1.0,
            ])
        }
    }

    struct Constant;

    impl BlackBox for Constant {
        fn input_shape(&self) -> (usize, usize) {
            (3, 4)
        }
        fn predict(&self, _x: &[f64]) -> Result<[f64; 2]> {
            Ok([0.7, -0.2])
        }
    }

    fn weights(n: usize, salt: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mag = 0.5 + (i as f64 * 0.37 + salt).sin().abs();
                if i % 3 == 0 { -mag } else { mag }
            })
            .collect()
    }

    fn instance(t: usize) -> Matrix {
        let mut rng = RngStream::new(77);
        Matrix::from_vec(t, 4, (0..t * 4).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn recovers_linear_weights() {
        let bb = Linear(weights(24, 0.1), weights(24, 1.3));
        let x = instance(6);
        let e = explain_lime(&bb, &x, Component::Dlat, 2000, None, 9).unwrap();
        for c in 0..2 {
            let truth = if c == 0 { &bb.0 } else { &bb.1 };
            for (got, want) in e.coeffs[c].as_slice().iter().zip(truth) {
                assert!((got - want).abs() <= 0.05 * want.abs(), "{got} vs {want}");
            }
            assert!(e.fidelity_r2[c] >= 0.99);
        }
        let f0 = bb.predict(x.as_slice()).unwrap();
        assert!((e.intercept[0] - f0[0]).abs() < 1e-3);
    }

    #[test]
    fn constant_box_has_zero_slopes() {
        let e = explain_lime(&Constant, &instance(3), Component::Dlon, 200, Some(2.0), 1).unwrap();
        for c in 0..2 {
            assert!(e.coeffs[c].as_slice().iter().all(|v| v.abs() <= 1e-9));
            assert_eq!(e.fidelity_r2[c], 1.0);
        }
        assert!((e.intercept[0] - 0.7).abs() <= 1e-9);
        assert_eq!(e.component, Component::Dlon);
    }

    #[test]
    fn seeded_and_validated() {
        let bb = Linear(weights(12, 0.4), weights(12, 0.9));
        let x = instance(3);
        let a = explain_lime(&bb, &x, Component::Dlat, 100, None, 5).unwrap();
        let b = explain_lime(&bb, &x, Component::Dlat, 100, None, 5).unwrap();
        assert_eq!(a, b);
        let c = explain_lime(&bb, &x, Component::Dlat, 100, None, 6).unwrap();
        assert_ne!(a.coeffs, c.coeffs);
        assert!((a.kernel_width - 0.75 * 12f64.sqrt()).abs() < 1e-15);
        assert!(explain_lime(&bb, &x, Component::Dlat, 49, None, 5).is_err());
        assert!(explain_lime(&bb, &x, Component::Dlat, 100, Some(0.0), 5).is_err());
        assert!(explain_lime(&bb, &instance(4), Component::Dlat, 100, None, 5).is_err());
    }

    #[test]
    fn non_finite_output_is_an_error() {
        struct Nan;
        impl BlackBox for Nan {
            fn input_shape(&self) -> (usize, usize) {
                (2, 4)
            }
            fn predict(&self, _x: &[f64]) -> Result<[f64; 2]> {
                Ok([f64::NAN, 0.0])
            }
        }
        assert!(matches!(
            explain_lime(&Nan, &Matrix::zeros(2, 4), Component::Dlat, 60, None, 0),
            Err(Error::NonFinite(_))
        ));
    }
}
