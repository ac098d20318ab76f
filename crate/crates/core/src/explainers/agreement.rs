use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Pairwise Spearman correlation of per-timestep importances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub methods: Vec<String>,
    pub rho: Matrix,
}

impl AgreementMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.methods.iter().position(|m| m == a)?;
        let j = self.methods.iter().position(|m| m == b)?;
        Some(self.rho.get(i, j))
    }
}

/// 1-based ranks, ties sharing the average of their positions.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// Spearman rank correlation: Pearson correlation of average ranks.
/// A constant vector correlates 0 with anything else.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("lengths {} and {} differ", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 timesteps".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("importance vector".into()));
    }
    if is_constant(a) || is_constant(b) {
        return Ok(0.0);
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean).powi(2);
        sbb += (y - mean).powi(2);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn agreement(importances: &[(String, Vec<f64>)]) -> Result<AgreementMatrix> {
    if importances.len() < 2 {
        return Err(Error::InvalidArgument("agreement needs at least 2 methods".into()));
    }
    let n = importances.len();
    let mut rho = Matrix::zeros(n, n);
    for i in 0..n {
        rho.set(i, i, 1.0);
        for j in i + 1..n {
            let r = spearman(&importances[i].1, &importances[j].1)?;
            rho.set(i, j, r);
            rho.set(j, i, r);
        }
    }
    Ok(AgreementMatrix {
        methods: importances.iter().map(|(m, _)| m.clone()).collect(),
        rho,
    })
}
