//! Synthetic tasks: `N` context distributions over `M` words, each drawn
//! independently from a symmetric Dirichlet.
//!
//! Small `alpha` gives sparse, long-tailed rows; large `alpha` gives rows
//! close to uniform.

use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numkit::{entropy, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTaskSpec {
    pub alpha: f64,
    /// Vocabulary size `M`.
    pub vocab: usize,
    /// Number of contexts `N`.
    pub contexts: usize,
    /// Embedding dimension `D` of the models fitted to this task.
    pub dim: usize,
    pub seed: u64,
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return invalid(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if self.vocab < 2 {
            return invalid(format!("vocab must be at least 2, got {}", self.vocab));
        }
        if self.contexts == 0 {
            return invalid("contexts must be at least 1");
        }
        if self.dim == 0 {
            return invalid("dim must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub spec: SyntheticTaskSpec,
    /// `N × M`, one distribution per row.
    pub p_star: Matrix,
}

impl SyntheticTask {
    pub fn mean_entropy(&self) -> f64 {
        self.p_star.rows_iter().map(entropy).sum::<f64>() / self.p_star.rows() as f64
    }
}

/// One draw from the symmetric Dirichlet `Dir(alpha, …, alpha)` over `m`
/// categories.
///
/// Each `Gamma(alpha)` variate is produced in log space as
/// `log G + log(U) / alpha` with `G ~ Gamma(alpha + 1)` and `U ~ U(0, 1]`,
/// which stays accurate for shapes far below one where direct draws
/// underflow to zero. The row is then normalized with a max-shift. Entries
/// that still underflow are raised to the smallest positive normal float so
/// every row keeps full support.
pub fn sample_dirichlet(alpha: f64, m: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid(format!("alpha must be positive and finite, got {alpha}"));
    }
    if m < 2 {
        return invalid(format!("need at least 2 categories, got {m}"));
    }
    let gamma = Gamma::new(alpha + 1.0, 1.0).map_err(|e| crate::LabError::InvalidArgument(e.to_string()))?;
    let mut logs: Vec<f64> = (0..m)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            g.ln() + rng.uniform_open0().ln() / alpha
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in logs.iter_mut() {
        *x = (*x - max).exp().max(f64::MIN_POSITIVE);
        sum += *x;
    }
    logs.iter_mut().for_each(|x| *x /= sum);
    Ok(logs)
}

/// Row `j` is drawn from its own stream `(seed, j)`, so it does not depend on
/// `N` or on scheduling.
pub fn build_task(spec: SyntheticTaskSpec) -> Result<SyntheticTask> {
    spec.validate()?;
    let rows: Vec<Vec<f64>> = (0..spec.contexts)
        .into_par_iter()
        .map(|j| {
            let mut rng = Rng::stream(spec.seed, j as u64);
            sample_dirichlet(spec.alpha, spec.vocab, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(SyntheticTask { spec, p_star: Matrix::from_rows(&rows)? })
}
