//! Verifiers for the two quantitative limits of a Linear-Softmax head.
//!
//! * [`eckart_young_bound`] and [`mse_rank_fit`]: a rank-`(d+1)` log-prob
//!   matrix cannot get closer to a target than its best rank-`(d+1)`
//!   approximation.
//! * [`min_cross_entropy`] and [`max_entropy_primal`]: the best cross-entropy
//!   attainable with fixed words equals the largest entropy among
//!   distributions sharing the target's word moments. The two sides are
//!   solved by unrelated algorithms so each checks the other.

mod eckart;
mod maxent;

use eckart::right_solve_spd;
pub use eckart::{eckart_young_bound, mse_rank_fit, MseFit, MseFitConfig, RankOneCorrection};
pub use maxent::{
    constraint_residual, duality_gap, max_entropy_primal, min_cross_entropy, DualSolution, DualityReport,
    MaxEntInstance, PrimalSolution, DEFAULT_GRAD_TOL, DEFAULT_RESIDUAL_TOL,
};
