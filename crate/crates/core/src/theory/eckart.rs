//! Frobenius lower bound for fitting a log-probability matrix with a softmax
//! head, and a direct fit that can be compared against it.
//!
//! A Linear-Softmax head produces `A_Q = W Hᵀ − e_M logZᵀ`, a rank `≤ d + 1`
//! matrix, so no fit can beat the best rank-`(d+1)` approximation of the
//! target, whose residual is `sqrt(σ²_{d+2} + … )`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::numkit::{singular_values, Matrix, Rng};

/// `sqrt(Σ_{i ≥ d+2} σ_i²)`; zero once `d + 1 ≥ min(M, N)`.
pub fn eckart_young_bound(a: &Matrix, d: usize) -> Result<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return invalid("target matrix is empty");
    }
    if d + 1 >= a.rows().min(a.cols()) {
        return Ok(0.0);
    }
    Ok(singular_values(a)?.tail_norm(d + 1))
}

/// The rank-one term added to `W Hᵀ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankOneCorrection {
    /// Learned `c zᵀ`: the fit ranges over all rank-`(d+1)` matrices.
    #[default]
    FreeRankOne,
    /// `e_M zᵀ` with only `z` learned, the exact shape of a partition term.
    PartitionOffset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MseFitConfig {
    pub steps: usize,
    pub lr: f64,
    pub init_scale: f64,
    pub seed: u64,
    pub correction: RankOneCorrection,
}

impl Default for MseFitConfig {
    fn default() -> Self {
        MseFitConfig { steps: 3000, lr: 0.5, init_scale: 0.1, seed: 0, correction: RankOneCorrection::FreeRankOne }
    }
}

impl MseFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return invalid("steps must be positive");
        }
        if !(self.lr > 0.0 && self.lr <= 1.0) {
            return invalid(format!("lr must lie in (0, 1], got {}", self.lr));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return invalid("init_scale must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseFit {
    /// `M × d`.
    pub words: Matrix,
    /// `N × d`.
    pub contexts: Matrix,
    /// `c` in the correction `c zᵀ` (all ones for a partition offset).
    pub offset_rows: Vec<f64>,
    /// `z`; plays the role of `−logZ`.
    pub offset_cols: Vec<f64>,
    /// `‖A − W Hᵀ − c zᵀ‖_F`.
    pub error: f64,
    /// `error² / N`.
    pub mse: f64,
    pub bound: f64,
    pub steps: usize,
}

impl MseFit {
    pub fn reconstruction(&self) -> Matrix {
        let (m, n) = (self.words.rows(), self.contexts.rows());
        let mut b = self.words.matmul_t(&self.contexts).unwrap_or_else(|_| Matrix::zeros(m, n));
        for i in 0..m {
            for j in 0..n {
                b[(i, j)] += self.offset_rows[i] * self.offset_cols[j];
            }
        }
        b
    }
}

/// Solves `X S = G` for `X` with `S` symmetric positive semi-definite,
/// lightly regularized; `g` is `rows × r` and `s` is `r × r`.
pub(super) fn right_solve_spd(g: &Matrix, s: &Matrix) -> Matrix {
    let r = s.rows();
    let trace: f64 = (0..r).map(|i| s[(i, i)]).sum();
    let ridge = 1e-12 * trace.max(f64::MIN_POSITIVE);
    // Cholesky S + ridge·I = L Lᵀ
    let mut l = Matrix::zeros(r, r);
    for i in 0..r {
        for j in 0..=i {
            let mut v = s[(i, j)] + if i == j { ridge } else { 0.0 };
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = if i == j { v.max(ridge).sqrt() } else { v / l[(j, j)] };
        }
    }
    let mut x = g.clone();
    for row in 0..x.rows() {
        let y = x.row_mut(row);
        // y ← y L⁻ᵀ, then y ← y L⁻¹
        for i in 0..r {
            let mut v = y[i];
            for k in 0..i {
                v -= y[k] * l[(i, k)];
            }
            y[i] = v / l[(i, i)];
        }
        for i in (0..r).rev() {
            let mut v = y[i];
            for k in i + 1..r {
                v -= y[k] * l[(k, i)];
            }
            y[i] = v / l[(i, i)];
        }
    }
    x
}

fn gram(a: &Matrix) -> Matrix {
    a.transpose().matmul(a).expect("gram shapes agree")
}

/// Minimizes `‖A − W Hᵀ − c zᵀ‖²_F` by preconditioned gradient descent on
/// the stacked factors `L = [W c]`, `R = [H z]`:
/// `L ← L − η ∇_L (RᵀR)⁻¹`, `R ← R − η ∇_R (LᵀL)⁻¹`.
///
/// With [`RankOneCorrection::PartitionOffset`] the last column of `L` stays
/// all ones and `z` is refreshed to the column means of `A − W Hᵀ` after
/// each step.
pub fn mse_rank_fit(a: &Matrix, d: usize, cfg: &MseFitConfig) -> Result<MseFit> {
    cfg.validate()?;
    if !a.is_finite() {
        return invalid("target matrix must be finite");
    }
    let bound = eckart_young_bound(a, d)?;
    let (m, n) = a.shape();
    let r = d + 1;
    let scale = cfg.init_scale * (a.frobenius_norm() / ((m * n) as f64).sqrt()).sqrt().max(1e-3);
    let mut rng = Rng::new(cfg.seed);
    let mut left = rng.gaussian_matrix(m, r, scale);
    let mut right = rng.gaussian_matrix(n, r, scale);
    let fixed = cfg.correction == RankOneCorrection::PartitionOffset;
    if fixed {
        for i in 0..m {
            left[(i, d)] = 1.0;
        }
        refresh_offset(a, &left, &mut right, d);
    }
    let mut err = a.sub(&left.matmul_t(&right)?)?.frobenius_norm();
    let mut taken = 0;
    for step in 0..cfg.steps {
        // residual E = L Rᵀ − A
        let e = left.matmul_t(&right)?.sub(a)?;
        let lr = cfg.lr;
        if fixed {
            // only W and H move; z absorbs column means, so H is
            // preconditioned by the Gram matrix of the row-centered W
            let w = Matrix::from_fn(m, d, |i, k| left[(i, k)]);
            let h = Matrix::from_fn(n, d, |j, k| right[(j, k)]);
            let mut wc = w.clone();
            for k in 0..d {
                let mean = (0..m).map(|i| w[(i, k)]).sum::<f64>() / m as f64;
                for i in 0..m {
                    wc[(i, k)] -= mean;
                }
            }
            let dw = right_solve_spd(&e.matmul(&h)?, &gram(&h));
            let dh = right_solve_spd(&e.transpose().matmul(&w)?, &gram(&wc));
            for i in 0..m {
                for k in 0..d {
                    left[(i, k)] -= lr * dw[(i, k)];
                }
            }
            for j in 0..n {
                for k in 0..d {
                    right[(j, k)] -= lr * dh[(j, k)];
                }
            }
        } else {
            let dl = right_solve_spd(&e.matmul(&right)?, &gram(&right));
            let dr = right_solve_spd(&e.transpose().matmul(&left)?, &gram(&left));
            for i in 0..m {
                for k in 0..r {
                    left[(i, k)] -= lr * dl[(i, k)];
                }
            }
            for j in 0..n {
                for k in 0..r {
                    right[(j, k)] -= lr * dr[(j, k)];
                }
            }
        }
        if fixed {
            refresh_offset(a, &left, &mut right, d);
        }
        let new_err = a.sub(&left.matmul_t(&right)?)?.frobenius_norm();
        taken = step + 1;
        if !new_err.is_finite() || !left.is_finite() || !right.is_finite() {
            return Err(LabError::Divergence { step, loss: new_err });
        }
        let done = (err - new_err).abs() <= 1e-15 * err.max(1e-300) || new_err <= 1e-13 * a.frobenius_norm();
        err = new_err;
        if done {
            break;
        }
    }
    let words = Matrix::from_fn(m, d, |i, k| left[(i, k)]);
    let contexts = Matrix::from_fn(n, d, |j, k| right[(j, k)]);
    Ok(MseFit {
        words,
        contexts,
        offset_rows: left.col(d),
        offset_cols: right.col(d),
        error: err,
        mse: err * err / n as f64,
        bound,
        steps: taken,
    })
}

/// Sets `z_j` to the mean of column `j` of `A − W Hᵀ`, the exact minimizer
/// when the row factor of the correction is all ones.
fn refresh_offset(a: &Matrix, left: &Matrix, right: &mut Matrix, d: usize) {
    let (m, n) = a.shape();
    for j in 0..n {
        let mut s = 0.0;
        for i in 0..m {
            let wh: f64 = (0..d).map(|k| left[(i, k)] * right[(j, k)]).sum();
            s += a[(i, j)] - wh;
        }
        right[(j, d)] = s / m as f64;
    }
}
