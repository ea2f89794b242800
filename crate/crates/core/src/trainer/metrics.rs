use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::heads::{cross_entropy, kl_divergence};
use crate::numkit::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mean_kl: f64,
    pub mode_match: f64,
    /// Mean cross-entropy over all contexts after the last step.
    pub final_ce: f64,
    /// Training loss before each step.
    pub losses: Vec<f64>,
}

fn same_shape(p: &Matrix, q: &Matrix) -> Result<()> {
    if p.shape() != q.shape() || p.rows() == 0 {
        return Err(LabError::DimensionMismatch(format!(
            "probability tables are {:?} and {:?}",
            p.shape(),
            q.shape()
        )));
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax agrees.
pub fn mode_match(p_star: &Matrix, q: &Matrix) -> Result<f64> {
    same_shape(p_star, q)?;
    let hits = p_star.rows_iter().zip(q.rows_iter()).filter(|(p, q)| argmax(p) == argmax(q)).count();
    Ok(hits as f64 / p_star.rows() as f64)
}

/// `(1/N) Σ_j KL(P*_j ‖ Q_j)`.
pub fn mean_kl(p_star: &Matrix, q: &Matrix) -> Result<f64> {
    same_shape(p_star, q)?;
    let mut acc = 0.0;
    for (p, q) in p_star.rows_iter().zip(q.rows_iter()) {
        acc += kl_divergence(p, q)?;
    }
    Ok(acc / p_star.rows() as f64)
}

/// `(1/N) Σ_j H(P*_j, Q_j)`.
pub fn mean_cross_entropy(p_star: &Matrix, q: &Matrix) -> Result<f64> {
    same_shape(p_star, q)?;
    let mut acc = 0.0;
    for (p, q) in p_star.rows_iter().zip(q.rows_iter()) {
        acc += cross_entropy(p, q)?;
    }
    Ok(acc / p_star.rows() as f64)
}
