use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_instance, checked_predict, BlackBox};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use crate::trajectory::{Component, DeltaSample};

/// Coalition enumeration bound for [`exact_shapley`].
pub const MAX_EXACT_PLAYERS: usize = 16;
/// Permutation enumeration bound for [`explain_shap_exhaustive`].
pub const MAX_EXHAUSTIVE_PLAYERS: usize = 8;

/// Shapley attribution over `(timestep, feature)` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub component: Component,
    /// `T × F` per output component, standardized units.
    pub phi: [Matrix; 2],
    /// Mean model output over the background.
    pub base_value: [f64; 2],
    /// Model output on the explained instance.
    pub prediction: [f64; 2],
    /// Permutations walked; 0 when computed by coalition enumeration.
    pub n_permutations: usize,
    pub background_size: usize,
    pub seed: u64,
}

impl ShapExplanation {
    /// `|Σ phi − (f(x) − base)|` for the given component.
    pub fn efficiency_gap(&self, component: Component) -> f64 {
        let c = component.index();
        let total: f64 = self.phi[c].as_slice().iter().sum();
        (total - (self.prediction[c] - self.base_value[c])).abs()
    }
}

/// Seeded uniform sample of `size` training windows without replacement,
/// standardized for use as a Shapley background.
pub fn select_background(
    samples: &[&DeltaSample],
    size: usize,
    stats: &crate::trajectory::Standardization,
    seed: u64,
) -> Result<Vec<Matrix>> {
    if samples.is_empty() || size == 0 {
        return Err(Error::Empty("background"));
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    RngStream::new(seed).derive("background").shuffle(&mut idx);
    idx.truncate(size.min(samples.len()));
    idx.sort_unstable();
    Ok(idx.iter().map(|&i| stats.apply(&samples[i].inputs)).collect())
}

fn check_background<B: BlackBox + ?Sized>(model: &B, background: &[Matrix]) -> Result<()> {
    if background.is_empty() {
        return Err(Error::Empty("background"));
    }
    for b in background {
        check_instance(model, b)?;
    }
    Ok(())
}

fn base_value<B: BlackBox + ?Sized>(model: &B, background: &[Matrix]) -> Result<[f64; 2]> {
    let outs: Vec<[f64; 2]> = background
        .par_iter()
        .map(|b| checked_predict(model, b.as_slice()))
        .collect::<Result<_>>()?;
    let n = outs.len() as f64;
    Ok([
        outs.iter().map(|o| o[0]).sum::<f64>() / n,
        outs.iter().map(|o| o[1]).sum::<f64>() / n,
    ])
}

/// Walks every permutation from every background sample, averaging the
/// marginal contribution of each player as it is switched to the instance.
fn permutation_estimate<B: BlackBox + ?Sized>(
    model: &B,
    instance: &Matrix,
    background: &[Matrix],
    permutations: &[Vec<usize>],
) -> Result<[Vec<f64>; 2]> {
    let p = instance.as_slice().len();
    let x = instance.as_slice();
    let jobs: Vec<(usize, usize)> = (0..permutations.len())
        .flat_map(|k| (0..background.len()).map(move |b| (k, b)))
        .collect();
    let parts: Vec<[Vec<f64>; 2]> = jobs
        .par_iter()
        .map(|&(k, b)| {
            let mut z = background[b].as_slice().to_vec();
            let mut prev = checked_predict(model, &z)?;
            let mut contrib = [vec![0.0; p], vec![0.0; p]];
            for &player in &permutations[k] {
                z[player] = x[player];
                let cur = checked_predict(model, &z)?;
                for c in 0..2 {
                    contrib[c][player] += cur[c] - prev[c];
                }
                prev = cur;
            }
            Ok(contrib)
        })
        .collect::<Result<_>>()?;
    let mut phi = [vec![0.0; p], vec![0.0; p]];
    for part in &parts {
        for c in 0..2 {
            for (dst, v) in phi[c].iter_mut().zip(&part[c]) {
                *dst += v;
            }
        }
    }
    let draws = jobs.len() as f64;
    for c in 0..2 {
        phi[c].iter_mut().for_each(|v| *v /= draws);
    }
    Ok(phi)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    component: Component,
    shape: (usize, usize),
    phi: [Vec<f64>; 2],
    base_value: [f64; 2],
    prediction: [f64; 2],
    n_permutations: usize,
    background_size: usize,
    seed: u64,
) -> Result<ShapExplanation> {
    let [a, b] = phi;
    Ok(ShapExplanation {
        component,
        phi: [
            Matrix::from_vec(shape.0, shape.1, a)?,
            Matrix::from_vec(shape.0, shape.1, b)?,
        ],
        base_value,
        prediction,
        n_permutations,
        background_size,
        seed,
    })
}

/// Permutation-sampling Shapley estimate with seeded random permutations.
pub fn explain_shap_sampling<B: BlackBox + ?Sized>(
    model: &B,
    instance: &Matrix,
    background: &[Matrix],
    component: Component,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapExplanation> {
    check_instance(model, instance)?;
    check_background(model, background)?;
    if n_permutations == 0 {
        return Err(Error::InvalidArgument("n_permutations must be >= 1".into()));
    }
    let p = instance.as_slice().len();
    let root = RngStream::new(seed).derive("shap");
    let permutations: Vec<Vec<usize>> = (0..n_permutations)
        .map(|k| {
            let mut order: Vec<usize> = (0..p).collect();
            root.derive_indexed("permutation", k as u64).shuffle(&mut order);
            order
        })
        .collect();
    let phi = permutation_estimate(model, instance, background, &permutations)?;
    assemble(
        component,
        model.input_shape(),
        phi,
        base_value(model, background)?,
        checked_predict(model, instance.as_slice())?,
        n_permutations,
        background.len(),
        seed,
    )
}

/// The permutation estimator run over all `P!` orderings.
pub fn explain_shap_exhaustive<B: BlackBox + ?Sized>(
    model: &B,
    instance: &Matrix,
    background: &[Matrix],
    component: Component,
) -> Result<ShapExplanation> {
    check_instance(model, instance)?;
    check_background(model, background)?;
    let p = instance.as_slice().len();
    if p > MAX_EXHAUSTIVE_PLAYERS {
        return Err(Error::TooManyPlayers {
            players: p,
            max: MAX_EXHAUSTIVE_PLAYERS,
        });
    }
    let permutations: Vec<Vec<usize>> = (0..p).permutations(p).collect();
    let phi = permutation_estimate(model, instance, background, &permutations)?;
    assemble(
        component,
        model.input_shape(),
        phi,
        base_value(model, background)?,
        checked_predict(model, instance.as_slice())?,
        permutations.len(),
        background.len(),
        0,
    )
}

/// Exact Shapley values by enumerating all `2^P` coalitions.
///
/// A coalition's value is the mean model output over the background with
/// non-members replaced by background cells.
pub fn exact_shapley<B: BlackBox + ?Sized>(
    model: &B,
    instance: &Matrix,
    background: &[Matrix],
    component: Component,
) -> Result<ShapExplanation> {
    check_instance(model, instance)?;
    check_background(model, background)?;
    let x = instance.as_slice();
    let p = x.len();
    if p > MAX_EXACT_PLAYERS {
        return Err(Error::TooManyPlayers {
            players: p,
            max: MAX_EXACT_PLAYERS,
        });
    }
    let n_masks = 1usize << p;
    let values: Vec<[f64; 2]> = (0..n_masks)
        .into_par_iter()
        .map(|mask| {
            let mut acc = [0.0; 2];
            for b in background {
                let z: Vec<f64> = (0..p)
                    .map(|i| if mask >> i & 1 == 1 { x[i] } else { b.as_slice()[i] })
                    .collect();
                let y = checked_predict(model, &z)?;
                acc[0] += y[0];
                acc[1] += y[1];
            }
            let n = background.len() as f64;
            Ok([acc[0] / n, acc[1] / n])
        })
        .collect::<Result<_>>()?;

    // weight(s) = s! (P - s - 1)! / P!
    let mut fact = vec![1.0f64; p + 1];
    for i in 1..=p {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..p).map(|s| fact[s] * fact[p - s - 1] / fact[p]).collect();

    let mut phi = [vec![0.0; p], vec![0.0; p]];
    for i in 0..p {
        let bit = 1usize << i;
        for mask in (0..n_masks).filter(|m| m & bit == 0) {
            let w = weight[mask.count_ones() as usize];
            for c in 0..2 {
                phi[c][i] += w * (values[mask | bit][c] - values[mask][c]);
            }
        }
    }
    assemble(
        component,
        model.input_shape(),
        phi,
        values[0],
        checked_predict(model, x)?,
        0,
        background.len(),
        0,
    )
}
