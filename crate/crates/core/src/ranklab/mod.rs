//! Rank experiments for pointwise functions of low-rank matrices.
//!
//! * Hadamard powers: `rank(A^{⊙p}) ≤ min(M, N, C(d + p − 1, p))` for
//!   `rank(A) = d`, checked over Gaussian factors.
//! * Squaring a random rank-`(N−1)` square matrix gives full rank almost
//!   surely; measured as a Monte Carlo frequency.
//! * An indicator on `M` suitably distinct dot products lifts `W Hᵀ` to rank
//!   `M`.
//! * Whenever some pointwise `f` achieves rank `K`, an increasing
//!   piecewise-linear `g` does too; [`monotone_surrogate`] builds one.

mod construct;
mod power;
mod table;

pub use construct::{
    exhaustive_submatrix, lemma4_construct, lemma4_trials, monotone_surrogate, parity_cases, parity_table,
    surrogate_trials, Lemma4Report, Lemma4Trial, SurrogateCase, SurrogateReport, SurrogateTrial, DEFAULT_SURROGATE_BUDGET, DET_REL_TOL, DISTINCT_REL_TOL,
};
pub use power::{
    binomial, hadamard_power_bound, has_proportional_columns, power_rank_trials, square_fullrank_trials,
    PowerRankReport, RankTrialSpec, SquareTrialReport,
};
pub use table::{distinct_values, TableMode, ValueTableFn};
