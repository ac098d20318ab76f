use rayon::prelude::*;

use super::{LstmWeights, ModelParams, Weights};
use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softmax, Matrix};
use crate::trajectory::{Component, DeltaSample};

/// Per-position activations of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionCache {
    /// `T × hidden` hidden states, indexed by input position.
    pub h: Matrix,
    /// `T × hidden` cell states.
    pub c: Matrix,
    /// Gate activations (input, forget, cell, output), each `T × hidden`.
    pub gates: [Matrix; 4],
}

/// Everything the backward pass and the explainers need from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// Standardized input, `T × input_dim`.
    pub x: Matrix,
    pub fwd: DirectionCache,
    pub bwd: DirectionCache,
    /// Concatenated `[h_fwd; h_bwd]` per position, `T × 2·hidden`.
    pub states: Matrix,
    /// `tanh(W_a h_t + b_a)`, `T × attn_dim`.
    pub attn_hidden: Matrix,
    pub scores: Vec<f64>,
    pub attention: Vec<f64>,
    pub context: Vec<f64>,
    /// Standardized `(Δlat, Δlon)`.
    pub output: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Forecast step `(Δlat°, Δlon°)`.
    pub delta: [f64; 2],
    /// The same forecast in standardized units.
    pub output_std: [f64; 2],
    pub attention: Vec<f64>,
    pub cache: Option<ForwardCache>,
}

fn lstm_forward(w: &LstmWeights, x: &Matrix, reverse: bool) -> DirectionCache {
    let (steps, hidden) = (x.rows(), w.hidden());
    let mut h = Matrix::zeros(steps, hidden);
    let mut c = Matrix::zeros(steps, hidden);
    let mut gates: [Matrix; 4] = std::array::from_fn(|_| Matrix::zeros(steps, hidden));
    let mut z = vec![0.0; hidden];
    for step in 0..steps {
        let t = if reverse { steps - 1 - step } else { step };
        let prev = (step > 0).then(|| if reverse { t + 1 } else { t - 1 });
        for g in 0..4 {
            z.copy_from_slice(w.b[g].as_slice());
            w.w[g].matvec_acc(x.row(t), &mut z);
            if let Some(p) = prev {
                w.u[g].matvec_acc(h.row(p), &mut z);
            }
            let out = gates[g].row_mut(t);
            if g == 2 {
                out.iter_mut().zip(&z).for_each(|(o, v)| *o = v.tanh());
            } else {
                out.iter_mut().zip(&z).for_each(|(o, v)| *o = sigmoid(*v));
            }
        }
        for k in 0..hidden {
            let c_prev = prev.map_or(0.0, |p| c.get(p, k));
            let ct = gates[1].get(t, k) * c_prev + gates[0].get(t, k) * gates[2].get(t, k);
            c.set(t, k, ct);
            h.set(t, k, gates[3].get(t, k) * ct.tanh());
        }
    }
    DirectionCache { h, c, gates }
}

#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    w: &LstmWeights,
    cache: &DirectionCache,
    x: &Matrix,
    dstates: &Matrix,
    offset: usize,
    reverse: bool,
    grads: &mut LstmWeights,
    dx: &mut Matrix,
) {
    let (steps, hidden) = (x.rows(), w.hidden());
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let mut dz: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hidden]);
    for step in (0..steps).rev() {
        let t = if reverse { steps - 1 - step } else { step };
        let prev = (step > 0).then(|| if reverse { t + 1 } else { t - 1 });
        for k in 0..hidden {
            let dh = dstates.get(t, offset + k) + dh_next[k];
            let (i, f, g, o) = (
                cache.gates[0].get(t, k),
                cache.gates[1].get(t, k),
                cache.gates[2].get(t, k),
                cache.gates[3].get(t, k),
            );
            let tc = cache.c.get(t, k).tanh();
            let c_prev = prev.map_or(0.0, |p| cache.c.get(p, k));
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            dz[0][k] = dc * g * i * (1.0 - i);
            dz[1][k] = dc * c_prev * f * (1.0 - f);
            dz[2][k] = dc * i * (1.0 - g * g);
            dz[3][k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for g in 0..4 {
            grads.w[g].add_outer(&dz[g], x.row(t));
            grads.b[g]
                .as_mut_slice()
                .iter_mut()
                .zip(&dz[g])
                .for_each(|(b, d)| *b += d);
            w.w[g].matvec_t_acc(&dz[g], dx.row_mut(t));
            if let Some(p) = prev {
                grads.u[g].add_outer(&dz[g], cache.h.row(p));
                w.u[g].matvec_t_acc(&dz[g], &mut dh_next);
            }
        }
    }
}

/// Runs the network on an already standardized `T × input_dim` window.
pub fn forward_standardized(weights: &Weights, x: &Matrix) -> Result<ForwardCache> {
    let input_dim = weights.fwd.w[0].cols();
    if x.cols() != input_dim || x.rows() == 0 {
        return Err(Error::Shape(format!(
            "input is {}x{}, expected Tx{input_dim}",
            x.rows(),
            x.cols()
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("model input".into()));
    }
    let steps = x.rows();
    let hidden = weights.hidden();
    let attn_dim = weights.w_a.rows();

    let fwd = lstm_forward(&weights.fwd, x, false);
    let bwd = lstm_forward(&weights.bwd, x, true);
    let mut states = Matrix::zeros(steps, 2 * hidden);
    for t in 0..steps {
        let row = states.row_mut(t);
        row[..hidden].copy_from_slice(fwd.h.row(t));
        row[hidden..].copy_from_slice(bwd.h.row(t));
    }

    let mut attn_hidden = Matrix::zeros(steps, attn_dim);
    let mut scores = Vec::with_capacity(steps);
    for t in 0..steps {
        let a = attn_hidden.row_mut(t);
        a.copy_from_slice(weights.b_a.as_slice());
        weights.w_a.matvec_acc(states.row(t), a);
        a.iter_mut().for_each(|v| *v = v.tanh());
        scores.push(crate::numerics::dot(weights.v_a.as_slice(), a));
    }
    let attention = softmax(&scores)?;
    let mut context = vec![0.0; 2 * hidden];
    for (t, &alpha) in attention.iter().enumerate() {
        for (c, s) in context.iter_mut().zip(states.row(t)) {
            *c += alpha * s;
        }
    }
    let mut out = weights.b_o.as_slice().to_vec();
    weights.w_o.matvec_acc(&context, &mut out);
    let output = [out[0], out[1]];
    if !output.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("model output".into()));
    }
    Ok(ForwardCache {
        x: x.clone(),
        fwd,
        bwd,
        states,
        attn_hidden,
        scores,
        attention,
        context,
        output,
    })
}

/// Forecast for a raw (physical-unit) `T × 4` window.
pub fn forward(params: &ModelParams, inputs: &Matrix, want_cache: bool) -> Result<Prediction> {
    let x = params.standardize(inputs)?;
    let cache = forward_standardized(&params.weights, &x)?;
    let delta = params.standardization.target_from_std(cache.output);
    Ok(Prediction {
        delta,
        output_std: cache.output,
        attention: cache.attention.clone(),
        cache: want_cache.then_some(cache),
    })
}

/// Reverse-mode pass for an upstream gradient `dy` on the standardized
/// output. Parameter gradients accumulate into `grads`; the gradient with
/// respect to the standardized input is returned.
pub fn backward(weights: &Weights, cache: &ForwardCache, dy: [f64; 2], grads: &mut Weights) -> Matrix {
    let steps = cache.x.rows();
    let hidden = weights.hidden();
    let width = 2 * hidden;

    grads.w_o.add_outer(&dy, &cache.context);
    grads.b_o.as_mut_slice()[0] += dy[0];
    grads.b_o.as_mut_slice()[1] += dy[1];
    let mut dctx = vec![0.0; width];
    weights.w_o.matvec_t_acc(&dy, &mut dctx);

    let dalpha: Vec<f64> = (0..steps)
        .map(|t| crate::numerics::dot(&dctx, cache.states.row(t)))
        .collect();
    let weighted: f64 = cache.attention.iter().zip(&dalpha).map(|(a, d)| a * d).sum();

    let mut dstates = Matrix::zeros(steps, width);
    let v_a = weights.v_a.as_slice();
    let mut dpre = vec![0.0; v_a.len()];
    for t in 0..steps {
        let alpha = cache.attention[t];
        dstates
            .row_mut(t)
            .iter_mut()
            .zip(&dctx)
            .for_each(|(d, c)| *d = alpha * c);
        let de = alpha * (dalpha[t] - weighted);
        let a = cache.attn_hidden.row(t);
        for (k, (gv, &ak)) in grads.v_a.as_mut_slice().iter_mut().zip(a).enumerate() {
            *gv += de * ak;
            dpre[k] = de * v_a[k] * (1.0 - ak * ak);
        }
        grads.w_a.add_outer(&dpre, cache.states.row(t));
        grads
            .b_a
            .as_mut_slice()
            .iter_mut()
            .zip(&dpre)
            .for_each(|(b, d)| *b += d);
        weights.w_a.matvec_t_acc(&dpre, dstates.row_mut(t));
    }

    let mut dx = Matrix::zeros(steps, cache.x.cols());
    lstm_backward(&weights.fwd, &cache.fwd, &cache.x, &dstates, 0, false, &mut grads.fwd, &mut dx);
    lstm_backward(
        &weights.bwd,
        &cache.bwd,
        &cache.x,
        &dstates,
        hidden,
        true,
        &mut grads.bwd,
        &mut dx,
    );
    dx
}

/// Gradient of one standardized output component with respect to the
/// standardized input.
pub fn output_input_gradient(weights: &Weights, x: &Matrix, component: Component) -> Result<Matrix> {
    let cache = forward_standardized(weights, x)?;
    let mut dy = [0.0; 2];
    dy[component.index()] = 1.0;
    let mut scratch = zeros_like(weights);
    let dx = backward(weights, &cache, dy, &mut scratch);
    if !dx.is_finite() {
        return Err(Error::NonFinite("input gradient".into()));
    }
    Ok(dx)
}

pub(crate) fn zeros_like(weights: &Weights) -> Weights {
    let mut g = weights.clone();
    g.tensors_mut().into_iter().for_each(|m| m.fill(0.0));
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    /// Mean squared error over samples and both components, standardized units.
    pub mse: f64,
    pub grads: Weights,
    /// Per-sample gradient with respect to the standardized input.
    pub input_grads: Vec<Matrix>,
}

/// MSE and exact gradients on standardized `(input, target)` pairs.
///
/// Samples are processed in parallel and reduced in index order, so the
/// result does not depend on the number of worker threads.
pub fn loss_and_gradients_standardized(
    weights: &Weights,
    batch: &[(Matrix, [f64; 2])],
) -> Result<LossGradients> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let n = batch.len() as f64;
    let per_sample: Vec<(f64, Weights, Matrix)> = batch
        .par_iter()
        .map(|(x, target)| {
            let cache = forward_standardized(weights, x)?;
            let r = [cache.output[0] - target[0], cache.output[1] - target[1]];
            let mut g = zeros_like(weights);
            let dx = backward(weights, &cache, [r[0] / n, r[1] / n], &mut g);
            Ok((r[0] * r[0] + r[1] * r[1], g, dx))
        })
        .collect::<Result<_>>()?;

    let mut grads = zeros_like(weights);
    let mut sum_sq = 0.0;
    let mut input_grads = Vec::with_capacity(per_sample.len());
    for (sq, g, dx) in per_sample {
        sum_sq += sq;
        grads.add_assign(&g);
        input_grads.push(dx);
    }
    let mse = sum_sq / (2.0 * n);
    if !mse.is_finite() || !grads.is_finite() {
        return Err(Error::NonFinite("loss or gradient".into()));
    }
    Ok(LossGradients {
        mse,
        grads,
        input_grads,
    })
}

/// MSE and gradients for raw samples, standardized with the model's statistics.
pub fn loss_and_gradients(params: &ModelParams, batch: &[DeltaSample]) -> Result<LossGradients> {
    let standardized = batch
        .iter()
        .map(|s| {
            Ok((
                params.standardize(&s.inputs)?,
                params.standardization.target_to_std(s.target),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    loss_and_gradients_standardized(&params.weights, &standardized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::{init_model, ModelConfig};
    use crate::numerics::{finite_difference_gradient, RngStream};

    fn config(seed: u64) -> ModelConfig {
        ModelConfig {
            window: 6,
            hidden: 8,
            attn_dim: 8,
            seed,
            ..ModelConfig::default()
        }
    }

    fn random_input(rng: &mut RngStream, steps: usize) -> Matrix {
        let v = (0..steps * 4).map(|_| rng.normal()).collect();
        Matrix::from_vec(steps, 4, v).unwrap()
    }

    #[test]
    fn attention_is_a_distribution() {
        let mut rng = RngStream::new(77);
        for seed in 0..20 {
            let p = init_model(&config(seed)).unwrap();
            let x = random_input(&mut rng, 6);
            let pred = forward(&p, &x, false).unwrap();
            assert!((pred.attention.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(pred.attention.iter().all(|a| *a >= 0.0));
            assert_eq!(pred.attention.len(), 6);
        }
    }

    #[test]
    fn zero_head_outputs_destandardized_bias() {
        let mut p = init_model(&config(1)).unwrap();
        p.weights.w_o.fill(0.0);
        p.weights.b_o.as_mut_slice().copy_from_slice(&[0.3, -0.7]);
        p.standardization.mean = [0.01, 0.02, 60.0, 60.0];
        p.standardization.std = [0.5, 2.0, 1.0, 1.0];
        let want = p.standardization.target_from_std([0.3, -0.7]);
        let mut rng = RngStream::new(2);
        for _ in 0..5 {
            let pred = forward(&p, &random_input(&mut rng, 6), false).unwrap();
            assert_eq!(pred.delta, want);
        }
        assert!((want[0] - (0.3 * 2.0 + 0.02)).abs() < 1e-15);
        assert!((want[1] - (-0.7 * 0.5 + 0.01)).abs() < 1e-15);
    }

    #[test]
    fn forward_is_pure() {
        let p = init_model(&config(5)).unwrap();
        let x = random_input(&mut RngStream::new(5), 6);
        assert_eq!(forward(&p, &x, true).unwrap(), forward(&p, &x, true).unwrap());
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let p = init_model(&config(5)).unwrap();
        assert!(matches!(
            forward(&p, &Matrix::zeros(5, 4), false),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            forward(&p, &Matrix::zeros(6, 3), false),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let p = init_model(&config(8)).unwrap();
        let mut rng = RngStream::new(8);
        let batch: Vec<(Matrix, [f64; 2])> = (0..4)
            .map(|_| {
                let x = random_input(&mut rng, 6);
                let y = forward_standardized(&p.weights, &x).unwrap().output;
                (x, y)
            })
            .collect();
        let lg = loss_and_gradients_standardized(&p.weights, &batch).unwrap();
        assert_eq!(lg.mse, 0.0);
        assert!(lg.grads.flatten().iter().all(|g| g.abs() <= 1e-12));
        assert!(lg.input_grads.iter().all(|m| m.as_slice().iter().all(|g| g.abs() <= 1e-12)));
    }

    #[test]
    fn duplicated_sample_matches_single() {
        let p = init_model(&config(9)).unwrap();
        let mut rng = RngStream::new(9);
        let sample = (random_input(&mut rng, 6), [0.4, -1.1]);
        let one = loss_and_gradients_standardized(&p.weights, std::slice::from_ref(&sample)).unwrap();
        let many = loss_and_gradients_standardized(&p.weights, &vec![sample; 5]).unwrap();
        assert!((one.mse - many.mse).abs() <= 1e-12);
        for (a, b) in one.grads.flatten().iter().zip(many.grads.flatten()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let p = init_model(&config(1)).unwrap();
        assert!(matches!(
            loss_and_gradients_standardized(&p.weights, &[]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = init_model(&config(11)).unwrap();
        let mut rng = RngStream::new(11);
        let batch: Vec<(Matrix, [f64; 2])> = (0..3)
            .map(|_| (random_input(&mut rng, 6), [rng.normal(), rng.normal()]))
            .collect();
        let lg = loss_and_gradients_standardized(&p.weights, &batch).unwrap();
        let flat = p.weights.flatten();
        let mut probe = p.weights.clone();
        let fd = finite_difference_gradient(
            |theta| {
                probe.assign_flat(theta).unwrap();
                loss_and_gradients_standardized(&probe, &batch).unwrap().mse
            },
            &flat,
            1e-5,
        )
        .unwrap();
        for (i, (a, b)) in lg.grads.flatten().iter().zip(&fd).enumerate() {
            assert!((a - b).abs() / a.abs().max(1.0) <= 1e-4, "param {i}: {a} vs {b}");
        }
        let x0 = batch[0].0.as_slice().to_vec();
        let fd_x = finite_difference_gradient(
            |x| {
                let mut b = batch.clone();
                b[0].0 = Matrix::from_vec(6, 4, x.to_vec()).unwrap();
                loss_and_gradients_standardized(&p.weights, &b).unwrap().mse
            },
            &x0,
            1e-5,
        )
        .unwrap();
        for (a, b) in lg.input_grads[0].as_slice().iter().zip(&fd_x) {
            assert!((a - b).abs() / a.abs().max(1.0) <= 1e-4);
        }
    }

    #[test]
    fn time_reversal_swaps_directions() {
        let p = init_model(&config(21)).unwrap();
        let mut swapped = p.weights.clone();
        std::mem::swap(&mut swapped.fwd, &mut swapped.bwd);
        let x = random_input(&mut RngStream::new(21), 6);
        let mut rev = Matrix::zeros(6, 4);
        for t in 0..6 {
            rev.row_mut(t).copy_from_slice(x.row(5 - t));
        }
        let a = forward_standardized(&p.weights, &x).unwrap();
        let b = forward_standardized(&swapped, &rev).unwrap();
        let h = p.config.hidden;
        for t in 0..6 {
            let (orig, mirrored) = (a.states.row(5 - t), b.states.row(t));
            for k in 0..h {
                assert!((mirrored[k] - orig[h + k]).abs() <= 1e-12);
                assert!((mirrored[h + k] - orig[k]).abs() <= 1e-12);
            }
        }
    }
}
