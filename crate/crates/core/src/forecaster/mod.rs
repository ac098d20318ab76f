//! Bidirectional LSTM encoder with additive attention and a linear head
//! predicting the next `(Δlat, Δlon)` step.
//!
//! Inputs enter in physical units and are standardized at the model
//! boundary with the statistics stored alongside the weights, so a
//! checkpoint is self-contained.

mod checkpoint;
mod network;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{
    backward, forward, forward_standardized, loss_and_gradients, loss_and_gradients_standardized,
    output_input_gradient, ForwardCache, LossGradients, Prediction,
};
pub use train::{persistence_baseline, train, TrainReport};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use crate::trajectory::{Standardization, DEFAULT_WINDOW, N_FEATURES};

/// LSTM gate order used by every per-gate array.
pub const GATE_NAMES: [&str; 4] = ["input", "forget", "cell", "output"];
pub const FORGET_GATE: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub window: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub attn_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            input_dim: N_FEATURES,
            hidden: 32,
            attn_dim: 32,
            lr: 1e-3,
            epochs: 30,
            batch: 32,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.window < 2 {
            return bad(format!("window must be >= 2, got {}", self.window));
        }
        if self.input_dim != N_FEATURES {
            return bad(format!("input_dim must be {N_FEATURES}, got {}", self.input_dim));
        }
        if self.hidden == 0 || self.attn_dim == 0 {
            return bad("hidden and attn_dim must be >= 1".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch == 0 {
            return bad("batch must be >= 1".into());
        }
        Ok(())
    }
}

/// Weights of one LSTM direction, indexed by gate (see [`GATE_NAMES`]).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    /// `hidden × input_dim`
    pub w: [Matrix; 4],
    /// `hidden × hidden`
    pub u: [Matrix; 4],
    /// `hidden × 1`
    pub b: [Matrix; 4],
}

impl LstmWeights {
    fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w: std::array::from_fn(|_| Matrix::zeros(hidden, input_dim)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| Matrix::zeros(hidden, 1)),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u[0].rows()
    }
}

/// Every trainable tensor of the network. Also used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub fwd: LstmWeights,
    pub bwd: LstmWeights,
    /// `attn_dim × 2·hidden`
    pub w_a: Matrix,
    /// `attn_dim × 1`
    pub b_a: Matrix,
    /// `attn_dim × 1`
    pub v_a: Matrix,
    /// `2 × 2·hidden`
    pub w_o: Matrix,
    /// `2 × 1`
    pub b_o: Matrix,
}

impl Weights {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (h, a) = (config.hidden, config.attn_dim);
        Self {
            fwd: LstmWeights::zeros(config.input_dim, h),
            bwd: LstmWeights::zeros(config.input_dim, h),
            w_a: Matrix::zeros(a, 2 * h),
            b_a: Matrix::zeros(a, 1),
            v_a: Matrix::zeros(a, 1),
            w_o: Matrix::zeros(2, 2 * h),
            b_o: Matrix::zeros(2, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::with_capacity(31);
        for (dir, lstm) in [("fwd", &self.fwd), ("bwd", &self.bwd)] {
            for (g, name) in GATE_NAMES.iter().enumerate() {
                out.push((format!("{dir}.w_{name}"), &lstm.w[g]));
                out.push((format!("{dir}.u_{name}"), &lstm.u[g]));
                out.push((format!("{dir}.b_{name}"), &lstm.b[g]));
            }
        }
        out.push(("attn.w".into(), &self.w_a));
        out.push(("attn.b".into(), &self.b_a));
        out.push(("attn.v".into(), &self.v_a));
        out.push(("head.w".into(), &self.w_o));
        out.push(("head.b".into(), &self.b_o));
        out
    }

    /// Mutable tensors in the same order as [`Weights::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::with_capacity(31);
        for lstm in [&mut self.fwd, &mut self.bwd] {
            let LstmWeights { w, u, b } = lstm;
            for ((wg, ug), bg) in w.iter_mut().zip(u.iter_mut()).zip(b.iter_mut()) {
                out.push(wg);
                out.push(ug);
                out.push(bg);
            }
        }
        out.extend([
            &mut self.w_a,
            &mut self.b_a,
            &mut self.v_a,
            &mut self.w_o,
            &mut self.b_o,
        ]);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (_, m) in self.tensors() {
            out.extend_from_slice(m.as_slice());
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut offset = 0;
        for m in self.tensors_mut() {
            let n = m.as_slice().len();
            m.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &Weights) {
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for m in self.tensors_mut() {
            m.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }
}

/// A trained or freshly initialised forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub weights: Weights,
    pub standardization: Standardization,
}

impl ModelParams {
    pub fn window(&self) -> usize {
        self.config.window
    }

    /// Standardizes a raw `T × 4` window with the stored statistics.
    pub fn standardize(&self, raw: &Matrix) -> Result<Matrix> {
        if raw.shape() != (self.config.window, self.config.input_dim) {
            return Err(Error::Shape(format!(
                "input is {}x{}, model expects {}x{}",
                raw.rows(),
                raw.cols(),
                self.config.window,
                self.config.input_dim
            )));
        }
        Ok(self.standardization.apply(raw))
    }
}

/// Glorot-uniform weights, zero biases except forget-gate biases of 1.
pub fn init_model(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let root = RngStream::new(config.seed).derive("init");
    let mut weights = Weights::zeros(config);
    let names: Vec<String> = weights.tensors().into_iter().map(|(n, _)| n).collect();
    for (name, m) in names.iter().zip(weights.tensors_mut()) {
        if name.ends_with(".b") || name.contains(".b_") {
            if name.ends_with("b_forget") {
                m.fill(1.0);
            }
            continue;
        }
        let (fan_out, fan_in) = if name == "attn.v" {
            (1, m.rows())
        } else {
            (m.rows(), m.cols())
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut rng = root.derive(name);
        for v in m.as_mut_slice() {
            *v = rng.uniform_range(-limit, limit);
        }
    }
    Ok(ModelParams {
        config: config.clone(),
        weights,
        standardization: Standardization::identity(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            window: 5,
            hidden: 8,
            attn_dim: 6,
            seed: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init_model(&small()).unwrap(), init_model(&small()).unwrap());
        let other = ModelConfig { seed: 4, ..small() };
        assert_ne!(init_model(&small()).unwrap(), init_model(&other).unwrap());
    }

    #[test]
    fn init_shapes_and_biases() {
        let p = init_model(&small()).unwrap();
        assert_eq!(p.weights.w_a.shape(), (6, 16));
        assert_eq!(p.weights.v_a.shape(), (6, 1));
        assert_eq!(p.weights.w_o.shape(), (2, 16));
        for lstm in [&p.weights.fwd, &p.weights.bwd] {
            assert!(lstm.b[FORGET_GATE].as_slice().iter().all(|&b| b == 1.0));
            for g in [0, 2, 3] {
                assert!(lstm.b[g].as_slice().iter().all(|&b| b == 0.0));
            }
            assert_eq!(lstm.w[0].shape(), (8, 4));
            assert_eq!(lstm.u[0].shape(), (8, 8));
        }
        assert!(p.weights.b_a.as_slice().iter().all(|&b| b == 0.0));
        assert!(p.weights.b_o.as_slice().iter().all(|&b| b == 0.0));
        let limit = (6.0f64 / (4 + 8) as f64).sqrt();
        assert!(p.weights.fwd.w[0].as_slice().iter().all(|v| v.abs() <= limit));
        assert!(p.weights.fwd.w[0].as_slice().iter().any(|v| *v != 0.0));
    }

    #[test]
    fn hidden_eight_gives_attention_width_sixteen() {
        let cfg = ModelConfig {
            hidden: 8,
            ..ModelConfig::default()
        };
        let p = init_model(&cfg).unwrap();
        assert_eq!(p.weights.w_a.shape(), (cfg.attn_dim, 16));
    }

    #[test]
    fn flatten_round_trip() {
        let p = init_model(&small()).unwrap();
        let flat = p.weights.flatten();
        let mut w = Weights::zeros(&p.config);
        w.assign_flat(&flat).unwrap();
        assert_eq!(w, p.weights);
        assert!(w.assign_flat(&flat[1..]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig { window: 1, ..small() }.validate().is_err());
        assert!(ModelConfig { hidden: 0, ..small() }.validate().is_err());
        assert!(ModelConfig { lr: 0.0, ..small() }.validate().is_err());
        assert!(ModelConfig { input_dim: 3, ..small() }.validate().is_err());
    }
}
