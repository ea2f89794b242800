use crate::error::{LabError, Result};
use crate::numkit::Matrix;

fn same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() || p.is_empty() {
        return Err(LabError::DimensionMismatch(format!(
            "distributions have lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// `−Σ p_i log q_i`, skipping `p_i = 0`. Returns `+∞` when some `q_i = 0`
/// carries positive target mass.
pub fn cross_entropy(p_star: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p_star, q)?;
    let mut acc = 0.0;
    for (&p, &qi) in p_star.iter().zip(q) {
        if p > 0.0 {
            if qi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            acc -= p * qi.ln();
        }
    }
    Ok(acc)
}

/// `KL(p ‖ q) = Σ p_i log(p_i / q_i)`, with the same `+∞` convention.
pub fn kl_divergence(p_star: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p_star, q)?;
    let mut acc = 0.0;
    for (&p, &qi) in p_star.iter().zip(q) {
        if p > 0.0 {
            if qi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            acc += p * (p.ln() - qi.ln());
        }
    }
    Ok(acc)
}

/// `(1/N) ‖A_target − A_model‖²_F` for `M × N` log-probability matrices.
pub fn mse_logprob(target: &Matrix, model: &Matrix) -> Result<f64> {
    target.same_shape(model)?;
    let n = target.cols().max(1) as f64;
    let sq: f64 = target.data().iter().zip(model.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sq / n)
}
