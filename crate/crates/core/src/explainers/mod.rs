//! Attribution methods for a single forecast: LIME, gradient saliency,
//! attention weights, permutation feature importance and Shapley values,
//! plus a rank-agreement score across methods.
//!
//! Every explainer talks to the model through [`BlackBox`], which sees
//! standardized inputs flattened row-major (`timestep * features + feature`)
//! and returns the standardized `(Δlat, Δlon)` output. Perturbations and
//! permutations are drawn sequentially from the seed before any parallel
//! evaluation, and results are reduced in index order, so thread count never
//! changes an explanation.

mod agreement;
mod export;
mod lime;
mod pfi;
mod shapley;

pub use agreement::{agreement, spearman, AgreementMatrix};
pub use export::ExplanationExport;
pub use lime::{
    default_kernel_width, explain_lime, LimeExplanation, LIME_MIN_SAMPLES, LIME_RIDGE_LAMBDA,
};
pub use pfi::{permutation_feature_importance, EvalSet, FeatureImportance, PfiMetric, PfiReport};
pub use shapley::{
    exact_shapley, explain_shap_exhaustive, explain_shap_sampling, select_background,
    ShapExplanation, MAX_EXACT_PLAYERS, MAX_EXHAUSTIVE_PLAYERS,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::{forward_standardized, output_input_gradient, ModelParams};
use crate::numerics::Matrix;
use crate::trajectory::Component;

/// A forecasting function seen from the outside.
pub trait BlackBox: Sync {
    /// `(timesteps, features)` of one input.
    fn input_shape(&self) -> (usize, usize);

    /// Standardized `(Δlat, Δlon)` for a flattened standardized input.
    fn predict(&self, x: &[f64]) -> Result<[f64; 2]>;

    /// Gradient of one output component with respect to the flattened input.
    fn input_gradient(&self, _x: &[f64], _component: Component) -> Result<Vec<f64>> {
        Err(Error::Unsupported("input gradients"))
    }

    /// Per-timestep attention weights, for attention-bearing models.
    fn attention(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Unsupported("attention weights"))
    }
}

impl BlackBox for ModelParams {
    fn input_shape(&self) -> (usize, usize) {
        (self.config.window, self.config.input_dim)
    }

    fn predict(&self, x: &[f64]) -> Result<[f64; 2]> {
        let (t, f) = self.input_shape();
        let m = Matrix::from_vec(t, f, x.to_vec())?;
        Ok(forward_standardized(&self.weights, &m)?.output)
    }

    fn input_gradient(&self, x: &[f64], component: Component) -> Result<Vec<f64>> {
        let (t, f) = self.input_shape();
        let m = Matrix::from_vec(t, f, x.to_vec())?;
        Ok(output_input_gradient(&self.weights, &m, component)?.into_vec())
    }

    fn attention(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (t, f) = self.input_shape();
        let m = Matrix::from_vec(t, f, x.to_vec())?;
        Ok(forward_standardized(&self.weights, &m)?.attention)
    }
}

impl<B: BlackBox + ?Sized> BlackBox for &B {
    fn input_shape(&self) -> (usize, usize) {
        (**self).input_shape()
    }

    fn predict(&self, x: &[f64]) -> Result<[f64; 2]> {
        (**self).predict(x)
    }

    fn input_gradient(&self, x: &[f64], component: Component) -> Result<Vec<f64>> {
        (**self).input_gradient(x, component)
    }

    fn attention(&self, x: &[f64]) -> Result<Vec<f64>> {
        (**self).attention(x)
    }
}

pub(crate) fn check_instance<B: BlackBox + ?Sized>(model: &B, instance: &Matrix) -> Result<()> {
    let (t, f) = model.input_shape();
    if instance.shape() != (t, f) {
        return Err(Error::Shape(format!(
            "instance is {}x{}, model expects {t}x{f}",
            instance.rows(),
            instance.cols()
        )));
    }
    Ok(())
}

pub(crate) fn checked_predict<B: BlackBox + ?Sized>(model: &B, x: &[f64]) -> Result<[f64; 2]> {
    let y = model.predict(x)?;
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("model output".into()));
    }
    Ok(y)
}

/// Evaluates the model on every input in parallel, preserving order.
pub(crate) fn predict_all<B: BlackBox + ?Sized>(model: &B, inputs: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    inputs.par_iter().map(|x| checked_predict(model, x)).collect()
}

/// Signed input gradients for both output components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    /// `[∂Δlat/∂x, ∂Δlon/∂x]`, each `T × F` in standardized units.
    pub signed: [Matrix; 2],
    /// Elementwise L2 norm over the two components.
    pub magnitude: Matrix,
}

pub fn explain_saliency<B: BlackBox + ?Sized>(model: &B, instance: &Matrix) -> Result<SaliencyMap> {
    check_instance(model, instance)?;
    let (t, f) = model.input_shape();
    let grad = |c: Component| -> Result<Matrix> {
        let g = model.input_gradient(instance.as_slice(), c)?;
        Matrix::from_vec(t, f, g).map_err(|_| Error::NonFinite("saliency gradient".into()))
    };
    let signed = [grad(Component::Dlat)?, grad(Component::Dlon)?];
    let mag: Vec<f64> = signed[0]
        .as_slice()
        .iter()
        .zip(signed[1].as_slice())
        .map(|(a, b)| a.hypot(*b))
        .collect();
    Ok(SaliencyMap {
        magnitude: Matrix::from_vec(t, f, mag)?,
        signed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionExplanation {
    pub weights: Vec<f64>,
}

pub fn explain_attention<B: BlackBox + ?Sized>(
    model: &B,
    instance: &Matrix,
) -> Result<AttentionExplanation> {
    check_instance(model, instance)?;
    Ok(AttentionExplanation {
        weights: model.attention(instance.as_slice())?,
    })
}

/// Explanations that can be collapsed to one score per timestep.
pub trait TimestepAttribution {
    /// Unnormalized non-negative score per timestep.
    fn timestep_scores(&self) -> Vec<f64>;
}

fn abs_row_sums(m: &Matrix) -> Vec<f64> {
    (0..m.rows())
        .map(|r| m.row(r).iter().map(|v| v.abs()).sum())
        .collect()
}

impl TimestepAttribution for AttentionExplanation {
    fn timestep_scores(&self) -> Vec<f64> {
        self.weights.clone()
    }
}

impl TimestepAttribution for SaliencyMap {
    fn timestep_scores(&self) -> Vec<f64> {
        let a = abs_row_sums(&self.signed[0]);
        let b = abs_row_sums(&self.signed[1]);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    }
}

impl TimestepAttribution for LimeExplanation {
    fn timestep_scores(&self) -> Vec<f64> {
        abs_row_sums(&self.coeffs[self.component.index()])
    }
}

impl TimestepAttribution for ShapExplanation {
    fn timestep_scores(&self) -> Vec<f64> {
        abs_row_sums(&self.phi[self.component.index()])
    }
}

/// Min-max normalization to `[0, 1]`; a constant vector maps to all `0.5`.
pub fn normalize_importance(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return vec![0.5; scores.len()];
    }
    scores.iter().map(|s| (s - lo) / range).collect()
}

/// Per-timestep importance in `[0, 1]` for the highlighted-route figures.
pub fn per_timestep_importance<E: TimestepAttribution + ?Sized>(explanation: &E) -> Vec<f64> {
    normalize_importance(&explanation.timestep_scores())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::{init_model, ModelConfig};
    use crate::numerics::{finite_difference_gradient, RngStream};
    use proptest::prelude::*;

    /// `f(x) = (w·x, 0)` with analytic gradient.
    struct Linear {
        shape: (usize, usize),
        w: Vec<f64>,
    }

    impl BlackBox for Linear {
        fn input_shape(&self) -> (usize, usize) {
            self.shape
        }
        fn predict(&self, x: &[f64]) -> Result<[f64; 2]> {
            Ok([crate::numerics::dot(&self.w, x), 0.0])
        }
        fn input_gradient(&self, _x: &[f64], c: Component) -> Result<Vec<f64>> {
            Ok(match c {
                Component::Dlat => self.w.clone(),
                Component::Dlon => vec![0.0; self.w.len()],
            })
        }
    }

    fn model(seed: u64) -> ModelParams {
        init_model(&ModelConfig {
            window: 6,
            hidden: 8,
            attn_dim: 8,
            seed,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    fn random_instance(seed: u64) -> Matrix {
        let mut rng = RngStream::new(seed);
        Matrix::from_vec(6, 4, (0..24).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn saliency_of_linear_box_is_its_weights() {
        let w: Vec<f64> = (0..24).map(|i| (i as f64 - 11.5) / 7.0).collect();
        let lin = Linear { shape: (6, 4), w: w.clone() };
        let s = explain_saliency(&lin, &random_instance(1)).unwrap();
        for (a, b) in s.signed[0].as_slice().iter().zip(&w) {
            assert!((a - b).abs() <= 1e-9);
        }
        assert!(s.signed[1].as_slice().iter().all(|v| *v == 0.0));
        for (m, (a, b)) in s
            .magnitude
            .as_slice()
            .iter()
            .zip(s.signed[0].as_slice().iter().zip(s.signed[1].as_slice()))
        {
            assert!((m * m - (a * a + b * b)).abs() <= 1e-12);
        }
    }

    #[test]
    fn saliency_matches_finite_differences() {
        let p = model(4);
        let x = random_instance(4);
        let s = explain_saliency(&p, &x).unwrap();
        for c in Component::ALL {
            let fd = finite_difference_gradient(
                |v| p.predict(v).unwrap()[c.index()],
                x.as_slice(),
                1e-5,
            )
            .unwrap();
            for (a, b) in s.signed[c.index()].as_slice().iter().zip(&fd) {
                assert!((a - b).abs() / a.abs().max(1.0) <= 1e-4);
            }
        }
    }

    #[test]
    fn saliency_of_constant_model_is_zero() {
        let mut p = model(5);
        p.weights.w_o.fill(0.0);
        let s = explain_saliency(&p, &random_instance(5)).unwrap();
        assert!(s.magnitude.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn saliency_requires_gradients() {
        struct NoGrad;
        impl BlackBox for NoGrad {
            fn input_shape(&self) -> (usize, usize) {
                (2, 4)
            }
            fn predict(&self, _x: &[f64]) -> Result<[f64; 2]> {
                Ok([0.0; 2])
            }
        }
        assert!(matches!(
            explain_saliency(&NoGrad, &Matrix::zeros(2, 4)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn attention_explanation_is_the_forward_attention() {
        let p = model(6);
        let x = random_instance(6);
        let a = explain_attention(&p, &x).unwrap();
        let f = forward_standardized(&p.weights, &x).unwrap();
        assert_eq!(a.weights, f.attention);
        assert_eq!(a.weights.len(), 6);
        assert!((a.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn per_timestep_examples() {
        let att = AttentionExplanation {
            weights: vec![0.1, 0.6, 0.3],
        };
        let v = per_timestep_importance(&att);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 1.0);
        assert!((v[2] - 0.4).abs() < 1e-12);

        let mut phi = Matrix::zeros(4, 4);
        phi.set(2, 3, -0.7);
        let shap = ShapExplanation {
            component: Component::Dlat,
            phi: [phi, Matrix::zeros(4, 4)],
            base_value: [0.0; 2],
            prediction: [0.0; 2],
            n_permutations: 1,
            background_size: 1,
            seed: 0,
        };
        assert_eq!(per_timestep_importance(&shap), vec![0.0, 0.0, 1.0, 0.0]);

        let zero = SaliencyMap {
            signed: [Matrix::zeros(3, 4), Matrix::zeros(3, 4)],
            magnitude: Matrix::zeros(3, 4),
        };
        assert_eq!(per_timestep_importance(&zero), vec![0.5; 3]);
    }

    proptest! {
        #[test]
        fn normalized_importance_spans_unit_interval(v in prop::collection::vec(-5.0f64..5.0, 2..30)) {
            let n = normalize_importance(&v);
            prop_assert!(n.iter().all(|x| (0.0..=1.0).contains(x)));
            let constant = v.iter().all(|x| *x == v[0]);
            if !constant {
                prop_assert!(n.contains(&0.0) && n.contains(&1.0));
            }
        }
    }
}
