//! Singular values by one-sided (Hestenes) Jacobi rotations.
//!
//! The algorithm orthogonalizes the columns of the smaller orientation of the
//! input; the singular values are the final column norms. It is deterministic
//! for a fixed input (fixed cyclic sweep order) and has high relative accuracy,
//! which matters for rank decisions near the tolerance.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{invalid, Result};

const MAX_SWEEPS: usize = 80;

/// Singular values sorted in non-increasing order; length `min(rows, cols)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularSpectrum {
    pub values: Vec<f64>,
}

impl SingularSpectrum {
    pub fn largest(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// `sqrt(Σ_{i ≥ skip} σ_i²)`, the Frobenius residual of the best rank-`skip`
    /// approximation.
    pub fn tail_norm(&self, skip: usize) -> f64 {
        self.values.iter().skip(skip).map(|s| s * s).sum::<f64>().sqrt()
    }
}

pub fn singular_values(a: &Matrix) -> Result<SingularSpectrum> {
    if !a.is_finite() {
        return invalid("singular_values requires finite entries");
    }
    // Work on column vectors of the orientation with fewer columns.
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = if n <= m {
        (0..n).map(|j| a.col(j)).collect()
    } else {
        (0..m).map(|i| a.row(i).to_vec()).collect()
    };
    let k = cols.len();
    if k == 0 {
        return Ok(SingularSpectrum { values: vec![] });
    }

    // Pre-scale so the squared norms cannot overflow or underflow.
    let scale = a.max_abs();
    if scale == 0.0 {
        return Ok(SingularSpectrum { values: vec![0.0; k] });
    }
    for c in cols.iter_mut() {
        c.iter_mut().for_each(|x| *x /= scale);
    }

    let mut norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let (alpha, beta) = (norms[p], norms[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
                norms[p] = cp.iter().map(|x| x * x).sum();
                norms[q] = cq.iter().map(|x| x * x).sum();
            }
        }
        if !rotated {
            break;
        }
    }

    let mut values: Vec<f64> = norms.iter().map(|s| s.sqrt() * scale).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(SingularSpectrum { values })
}

/// Default rank tolerance `σ₁ · max(rows, cols) · ε`.
pub fn default_rank_tolerance(a: &Matrix, spectrum: &SingularSpectrum) -> f64 {
    spectrum.largest() * a.rows().max(a.cols()) as f64 * f64::EPSILON
}

/// Count of singular values strictly above the tolerance.
pub fn numerical_rank(a: &Matrix, tol: Option<f64>) -> Result<usize> {
    let spectrum = singular_values(a)?;
    let tau = tol.unwrap_or_else(|| default_rank_tolerance(a, &spectrum));
    Ok(spectrum.values.iter().filter(|&&s| s > tau).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_spectrum() {
        let s = singular_values(&Matrix::diag(&[1.0, 3.0, 2.0])).unwrap();
        assert_eq!(s.values.len(), 3);
        for (got, want) in s.values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [0.6, 0.8, 0.0];
        let v = [0.0, 1.0 / 2f64.sqrt(), 0.0, 1.0 / 2f64.sqrt()];
        let a = Matrix::from_fn(3, 4, |i, j| u[i] * v[j]);
        let s = singular_values(&a).unwrap();
        assert_eq!(s.values.len(), 3);
        assert!((s.values[0] - 1.0).abs() < 1e-14);
        assert!(s.values[1..].iter().all(|&x| x < 1e-15));
        assert_eq!(numerical_rank(&a, None).unwrap(), 1);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&Matrix::identity(4), None).unwrap(), 4);
        assert_eq!(numerical_rank(&Matrix::filled(5, 5, 1.0), None).unwrap(), 1);
        assert_eq!(numerical_rank(&Matrix::zeros(3, 2), None).unwrap(), 0);
        // explicit tolerance overrides the default
        assert_eq!(numerical_rank(&Matrix::diag(&[1.0, 1e-3]), Some(1e-2)).unwrap(), 1);
    }

    #[test]
    fn wide_and_tall_agree() {
        let a = Matrix::from_fn(3, 7, |i, j| ((i * 7 + j) as f64).sin());
        let s1 = singular_values(&a).unwrap();
        let s2 = singular_values(&a.transpose()).unwrap();
        assert_eq!(s1.values.len(), 3);
        for (x, y) in s1.values.iter().zip(&s2.values) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut a = Matrix::identity(2);
        a[(0, 1)] = f64::NAN;
        assert!(singular_values(&a).is_err());
    }

    #[test]
    fn tail_norm() {
        let s = singular_values(&Matrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        assert!((s.tail_norm(2) - 1.0).abs() < 1e-14);
        assert!((s.tail_norm(1) - 5f64.sqrt()).abs() < 1e-14);
        assert_eq!(s.tail_norm(3), 0.0);
    }
}
