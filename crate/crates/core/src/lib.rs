//! A numerical laboratory for the softmax bottleneck.
//!
//! The crate implements the Linear-Softmax, Linear-Monotonic-Softmax (LMS) and
//! Mixture-of-Softmaxes output heads with hand-derived gradients, the PLIF
//! family of piecewise-linear increasing functions, synthetic Dirichlet tasks,
//! and empirical verifiers for the rank and maximum-entropy results that
//! describe when a softmax head can or cannot represent a set of distributions.
//!
//! Module map:
//!
//! * [`numkit`]: dense matrices, stable softmax, singular values, seeded RNG.
//! * [`monofn`]: pointwise monotone functions (identity, sigsoftmax, powers,
//!   monotone MLP, PLIF).
//! * [`heads`]: probability heads, losses, log-probability matrices.
//! * [`synth`]: Dirichlet-sampled synthetic tasks.
//! * [`trainer`]: first-order fitting of heads to tasks and the KL / mode metrics.
//! * [`ranklab`]: Hadamard-power, squaring and monotone-surrogate rank experiments.
//! * [`theory`]: Eckart-Young and maximum-entropy duality verifiers.
//! * [`cli`]: configuration and report plumbing behind the `lmslab` binary.

pub mod cli;
pub mod error;
pub mod heads;
pub mod monofn;
pub mod numkit;
pub mod ranklab;
pub mod synth;
pub mod theory;
pub mod trainer;

pub use error::{LabError, Result};
