use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numkit::{numerical_rank, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankTrialSpec {
    /// Rows `M` of `A = W Hᵀ`.
    pub rows: usize,
    /// Columns `N`.
    pub cols: usize,
    /// Inner dimension `d`.
    pub dim: usize,
    pub power: u32,
    pub trials: usize,
    pub seed: u64,
}

impl RankTrialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > self.rows.min(self.cols) {
            return invalid(format!("need 1 <= d <= min(M, N), got d = {}", self.dim));
        }
        if self.power == 0 {
            return invalid("power must be at least 1");
        }
        if self.trials == 0 {
            return invalid("need at least one trial");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRankReport {
    pub spec: RankTrialSpec,
    /// `min(M, N, C(d + p − 1, p))`.
    pub bound: usize,
    pub ranks: Vec<usize>,
    pub max_rank: usize,
    pub violations: usize,
}

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Rank ceiling of the `p`-th Hadamard power of a rank-`d` matrix.
pub fn hadamard_power_bound(rows: usize, cols: usize, dim: usize, power: u32) -> usize {
    let c = binomial((dim as u64 + power as u64).saturating_sub(1), power as u64);
    rows.min(cols).min(usize::try_from(c).unwrap_or(usize::MAX))
}

/// Gaussian `W (M×d)`, `H (N×d)` per trial; records the numerical rank of
/// `(W Hᵀ)^{⊙p}` and how often it exceeds the bound.
pub fn power_rank_trials(spec: &RankTrialSpec) -> Result<PowerRankReport> {
    spec.validate()?;
    let ranks: Vec<usize> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = Rng::stream(spec.seed, t as u64);
            let w = rng.gaussian_matrix(spec.rows, spec.dim, 1.0);
            let h = rng.gaussian_matrix(spec.cols, spec.dim, 1.0);
            let a = w.matmul_t(&h)?.map(|x| x.powi(spec.power as i32));
            numerical_rank(&a, None)
        })
        .collect::<Result<_>>()?;
    let bound = hadamard_power_bound(spec.rows, spec.cols, spec.dim, spec.power);
    let violations = ranks.iter().filter(|&&r| r > bound).count();
    let max_rank = ranks.iter().copied().max().unwrap_or(0);
    Ok(PowerRankReport { spec: *spec, bound, ranks, max_rank, violations })
}

/// True when two columns of `a` are parallel to relative tolerance `tol`
/// (or one of them vanishes).
pub fn has_proportional_columns(a: &Matrix, tol: f64) -> bool {
    let cols: Vec<Vec<f64>> = (0..a.cols()).map(|j| a.col(j)).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for p in 0..cols.len() {
        for q in p + 1..cols.len() {
            let (np, nq) = (norm(&cols[p]), norm(&cols[q]));
            if np == 0.0 || nq == 0.0 {
                return true;
            }
            let c: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum::<f64>() / (np * nq);
            if 1.0 - c.abs() <= tol {
                return true;
            }
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareTrialReport {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub proportional: bool,
    pub ranks: Vec<usize>,
    pub full_rank: usize,
    /// Trials whose input had two proportional columns; they are excluded
    /// from `frequency`.
    pub flagged: usize,
    /// `full_rank / (trials − flagged)`.
    pub frequency: f64,
    /// Flagged trials that nevertheless reached full rank.
    pub flagged_full_rank: usize,
}

/// Squares rank-`(n−1)` Gaussian products `W Hᵀ` elementwise and counts how
/// often the result has full numerical rank `n`.
///
/// With `proportional = true` every input is built with column 1 a multiple
/// of column 0, the degenerate family that squaring cannot repair.
pub fn square_fullrank_trials(n: usize, trials: usize, seed: u64, proportional: bool) -> Result<SquareTrialReport> {
    if n < 2 {
        return invalid(format!("need n > 1, got {n}"));
    }
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let results: Vec<(usize, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = Rng::stream(seed, t as u64);
            let w = rng.gaussian_matrix(n, n - 1, 1.0);
            let mut h = rng.gaussian_matrix(n, n - 1, 1.0);
            if proportional {
                let c = rng.uniform_in(0.5, 2.0);
                for k in 0..n - 1 {
                    h[(1, k)] = c * h[(0, k)];
                }
            }
            let a = w.matmul_t(&h)?;
            let flagged = has_proportional_columns(&a, 1e-12);
            let r = numerical_rank(&a.map(|x| x * x), None)?;
            Ok((r, flagged))
        })
        .collect::<Result<_>>()?;
    let ranks: Vec<usize> = results.iter().map(|r| r.0).collect();
    let flagged = results.iter().filter(|r| r.1).count();
    let full_rank = results.iter().filter(|r| !r.1 && r.0 == n).count();
    let flagged_full_rank = results.iter().filter(|r| r.1 && r.0 == n).count();
    let counted = trials - flagged;
    let frequency = if counted == 0 { 0.0 } else { full_rank as f64 / counted as f64 };
    Ok(SquareTrialReport { n, trials, seed, proportional, ranks, full_rank, flagged, frequency, flagged_full_rank })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(3, 2), 3);
        assert_eq!(binomial(5, 3), 10);
        assert_eq!(binomial(4, 0), 1);
        assert_eq!(hadamard_power_bound(10, 10, 2, 2), 3);
        assert_eq!(hadamard_power_bound(12, 12, 3, 3), 10);
        assert_eq!(hadamard_power_bound(4, 6, 3, 3), 4);
        assert_eq!(hadamard_power_bound(9, 9, 1, 7), 1);
    }

    #[test]
    fn rank_one_stays_rank_one() {
        for p in 1..=5 {
            let r = power_rank_trials(&RankTrialSpec { rows: 7, cols: 9, dim: 1, power: p, trials: 20, seed: 1 }).unwrap();
            assert!(r.ranks.iter().all(|&x| x == 1), "p={p}: {:?}", r.ranks);
        }
    }

    #[test]
    fn square_of_rank_two_in_ten_by_ten() {
        let r = power_rank_trials(&RankTrialSpec { rows: 10, cols: 10, dim: 2, power: 2, trials: 200, seed: 3 }).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.max_rank, 3);
    }

    #[test]
    fn proportional_columns_are_flagged() {
        let r = square_fullrank_trials(4, 50, 2, true).unwrap();
        assert_eq!(r.flagged, 50);
        assert_eq!(r.flagged_full_rank, 0);
        assert!(r.ranks.iter().all(|&x| x < 4));
        let r = square_fullrank_trials(4, 50, 2, false).unwrap();
        assert_eq!(r.flagged, 0);
        assert!(r.frequency >= 0.98);
    }

    #[test]
    fn invalid_specs() {
        assert!(square_fullrank_trials(1, 10, 0, false).is_err());
        assert!(power_rank_trials(&RankTrialSpec { rows: 3, cols: 3, dim: 4, power: 2, trials: 1, seed: 0 }).is_err());
        assert!(power_rank_trials(&RankTrialSpec { rows: 3, cols: 3, dim: 2, power: 0, trials: 1, seed: 0 }).is_err());
    }
}
