//! Dense kernels shared by every other module: matrices, stable softmax,
//! singular values and numerical rank, and the seeded generator.

mod matrix;
mod rng;
mod softmax;
mod svd;

pub use matrix::{determinant, dot, pivoted_selection, EmbeddingSet, Matrix};
pub use rng::Rng;
pub use softmax::{entropy, log_softmax, log_sum_exp, sigmoid, softmax, softplus, softplus_inv};
pub(crate) use softmax::lse_unchecked;
pub use svd::{default_rank_tolerance, numerical_rank, singular_values, SingularSpectrum};
