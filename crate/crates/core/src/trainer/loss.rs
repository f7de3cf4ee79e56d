use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Matrix;

/// Scale used by the reference training runs.
pub const DEFAULT_PSEUDO_HUBER_C: f64 = 6.9e-5;

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return invalid(format!("pseudo-Huber delta must be positive, got {delta}"));
    }
    Ok(())
}

/// `Σ_i √(r_i² + δ²) − δ`.
pub fn pseudo_huber(residual: &[f64], delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(residual.iter().map(|r| ph(*r, delta)).sum())
}

fn ph(r: f64, delta: f64) -> f64 {
    // r²/(√(r²+δ²)+δ) avoids cancellation for |r| ≪ δ
    let s = (r * r + delta * delta).sqrt();
    r * r / (s + delta)
}

/// `∂/∂r_i` of [`pseudo_huber`]: `r_i/√(r_i² + δ²)`.
pub fn pseudo_huber_grad(residual: &[f64], delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    Ok(residual
        .iter()
        .map(|r| r / (r * r + delta * delta).sqrt())
        .collect())
}

/// Graph-level MSE: mean-pool node features per graph, then
/// `(1/B) Σ_g ‖x̄_g − x̂_g‖²`. Graph ids are `0..B`.
pub fn graph_mse(node_features: &Matrix, batch_assign: &[usize], targets: &Matrix) -> Result<f64> {
    let (n, d) = (node_features.rows(), node_features.cols());
    let b = targets.rows();
    if batch_assign.len() != n {
        return invalid("batch assignment must have one entry per node");
    }
    if targets.cols() != d {
        return invalid("target feature dimension does not match nodes");
    }
    if b == 0 {
        return invalid("graph batch is empty");
    }
    let mut sums = Matrix::zeros(b, d);
    let mut counts = vec![0usize; b];
    for (v, &g) in batch_assign.iter().enumerate() {
        if g >= b {
            return invalid(format!("graph id {g} outside 0..{b}"));
        }
        counts[g] += 1;
        for (s, x) in sums.row_mut(g).iter_mut().zip(node_features.row(v)) {
            *s += x;
        }
    }
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return invalid(format!("graph {g} has no nodes"));
    }
    let total: f64 = (0..b)
        .map(|g| {
            let c = counts[g] as f64;
            sums.row(g)
                .iter()
                .zip(targets.row(g))
                .map(|(s, t)| (s / c - t).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(total / b as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    PseudoHuber,
    GraphMse,
}

/// Distance between a clean estimate and its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// `δ` of the pseudo-Huber loss.
    pub c_param: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            kind: LossKind::PseudoHuber,
            c_param: DEFAULT_PSEUDO_HUBER_C,
        }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kind == LossKind::PseudoHuber {
            check_delta(self.c_param)?;
        }
        Ok(())
    }

    /// Loss of one item and its gradient in the prediction. A single item is
    /// a one-node graph, so graph MSE reduces to `‖r‖²`.
    pub fn value_and_grad(&self, residual: &[f64]) -> (f64, Vec<f64>) {
        match self.kind {
            LossKind::PseudoHuber => {
                let d = self.c_param;
                let v = residual.iter().map(|r| ph(*r, d)).sum();
                let g = residual.iter().map(|r| r / (r * r + d * d).sqrt()).collect();
                (v, g)
            }
            LossKind::GraphMse => {
                let v = residual.iter().map(|r| r * r).sum();
                (v, residual.iter().map(|r| 2.0 * r).collect())
            }
        }
    }
}
