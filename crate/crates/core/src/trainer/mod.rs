//! Fits heads to synthetic tasks by minimizing the mean cross-entropy over
//! free context vectors, shared word embeddings and head parameters.
//!
//! Gradients over contexts are computed in fixed-size chunks (in parallel
//! when rayon has threads) and reduced in ascending chunk order, so results
//! are identical for any thread count.

mod metrics;
mod optim;
mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{argmax, mean_cross_entropy, mean_kl, mode_match, MetricsReport};
pub use optim::Optimizer;
pub use sweep::{run_sweep, summarize_rows, sweep_csv, SweepRow, SweepSpec, SweepSummary, SWEEP_HEADER};

use crate::error::{invalid, LabError, Result};
use crate::heads::{HeadGradAccum, HeadModel, HeadScratch, MosParams};
use crate::monofn::{MonotoneFn, MonotoneMlp, Plif};
use crate::numkit::{Matrix, Rng};
use crate::synth::SyntheticTask;
use optim::OptState;

/// Contexts per parallel work unit. Fixed so the reduction order does not
/// depend on the thread count.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    /// Contexts per step; 0 means full batch.
    pub batch: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 3000, lr: 1e-2, optimizer: Optimizer::default(), batch: 0, init_scale: 0.1, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return invalid("steps must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return invalid(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return invalid(format!("init_scale must be non-negative, got {}", self.init_scale));
        }
        self.optimizer.validate()
    }
}

/// Which head to train and its size knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "head", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HeadSpec {
    Linear,
    Sigsoftmax,
    LmsMlp { hidden: usize },
    LmsPlif { range: f64, knots: usize },
    Mos { components: usize },
}

pub const HEAD_NAMES: [&str; 5] = ["linear", "sigsoftmax", "lms-mlp", "lms-plif", "mos"];

pub const DEFAULT_MLP_HIDDEN: usize = 32;
pub const DEFAULT_PLIF_RANGE: f64 = 10.0;
pub const DEFAULT_PLIF_KNOTS: usize = 1000;
pub const DEFAULT_MOS_COMPONENTS: usize = 3;
/// Half-width over which the MLP starts out close to the identity.
const MLP_INIT_SPAN: f64 = 8.0;

impl HeadSpec {
    /// Parse a head name with default sizes.
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "linear" => HeadSpec::Linear,
            "sigsoftmax" => HeadSpec::Sigsoftmax,
            "lms-mlp" => HeadSpec::LmsMlp { hidden: DEFAULT_MLP_HIDDEN },
            "lms-plif" => HeadSpec::LmsPlif { range: DEFAULT_PLIF_RANGE, knots: DEFAULT_PLIF_KNOTS },
            "mos" => HeadSpec::Mos { components: DEFAULT_MOS_COMPONENTS },
            other => {
                return invalid(format!("unknown head '{other}'; valid heads: {}", HEAD_NAMES.join(", ")));
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            HeadSpec::Linear => "linear",
            HeadSpec::Sigsoftmax => "sigsoftmax",
            HeadSpec::LmsMlp { .. } => "lms-mlp",
            HeadSpec::LmsPlif { .. } => "lms-plif",
            HeadSpec::Mos { .. } => "mos",
        }
    }

    /// Size knobs as a compact string for reports.
    pub fn knobs(&self) -> String {
        match self {
            HeadSpec::Linear | HeadSpec::Sigsoftmax => String::new(),
            HeadSpec::LmsMlp { hidden } => format!("hidden={hidden}"),
            HeadSpec::LmsPlif { range, knots } => format!("T={range};K={knots}"),
            HeadSpec::Mos { components } => format!("K={components}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            HeadSpec::LmsMlp { hidden: 0 } => invalid("lms-mlp needs at least one hidden unit"),
            HeadSpec::LmsPlif { range, knots } if !(range > 0.0 && range.is_finite()) || knots == 0 => {
                invalid("lms-plif needs a positive range and at least one knot")
            }
            HeadSpec::Mos { components: 0 } => invalid("mos needs at least one component"),
            _ => Ok(()),
        }
    }

    /// Fresh head with Gaussian word embeddings; monotone functions start at
    /// (or near) the identity.
    pub fn build(&self, vocab: usize, dim: usize, init_scale: f64, rng: &mut Rng) -> Result<HeadModel> {
        self.validate()?;
        let words = rng.gaussian_matrix(vocab, dim, init_scale);
        match *self {
            HeadSpec::Linear => HeadModel::linear(words),
            HeadSpec::Sigsoftmax => HeadModel::lms(words, MonotoneFn::Sigsoftmax),
            HeadSpec::LmsMlp { hidden } => {
                HeadModel::lms(words, MonotoneFn::Mlp(MonotoneMlp::near_identity(hidden, MLP_INIT_SPAN)?))
            }
            HeadSpec::LmsPlif { range, knots } => HeadModel::lms(words, MonotoneFn::Plif(Plif::identity(range, knots)?)),
            HeadSpec::Mos { components } => {
                let p = MosParams::random(components, dim, init_scale, rng)?;
                HeadModel::mos(words, p)
            }
        }
    }
}

/// A head plus one free context vector per row of the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub head: HeadModel,
    /// `N × d`.
    pub contexts: Matrix,
}

impl FittedModel {
    pub fn init(spec: &HeadSpec, vocab: usize, contexts: usize, dim: usize, cfg: &TrainConfig) -> Result<Self> {
        let mut rng = Rng::new(cfg.seed);
        let head = spec.build(vocab, dim, cfg.init_scale, &mut rng)?;
        let contexts = rng.gaussian_matrix(contexts, dim, cfg.init_scale);
        Ok(FittedModel { head, contexts })
    }

    /// `N × M` model probabilities.
    pub fn prob_table(&self) -> Result<Matrix> {
        self.head.prob_table(&self.contexts)
    }

    pub fn evaluate(&self, p_star: &Matrix) -> Result<(f64, f64, f64)> {
        let q = self.prob_table()?;
        Ok((mean_kl(p_star, &q)?, mode_match(p_star, &q)?, mean_cross_entropy(p_star, &q)?))
    }

    /// Mean cross-entropy over `rows` and its gradient: context rows are
    /// written into `ctx_grad` (same layout as `contexts`), head parameters
    /// accumulated into the returned buffer.
    fn gradient(&self, p_star: &Matrix, rows: &[usize], ctx_grad: &mut [f64]) -> HeadGradAccum {
        let d = self.head.dim();
        let weight = 1.0 / rows.len() as f64;
        let parts: Vec<(HeadGradAccum, Vec<f64>)> = rows
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = HeadGradAccum::new(&self.head);
                let mut s = HeadScratch::new(&self.head);
                let mut dh = vec![0.0; chunk.len() * d];
                for (k, &j) in chunk.iter().enumerate() {
                    self.head.backward_into(
                        self.contexts.row(j),
                        p_star.row(j),
                        weight,
                        &mut dh[k * d..(k + 1) * d],
                        &mut acc,
                        &mut s,
                    );
                }
                (acc, dh)
            })
            .collect();
        let mut total = HeadGradAccum::new(&self.head);
        for (chunk, (acc, dh)) in rows.chunks(CHUNK).zip(&parts) {
            total.merge(acc);
            for (k, &j) in chunk.iter().enumerate() {
                ctx_grad[j * d..(j + 1) * d].copy_from_slice(&dh[k * d..(k + 1) * d]);
            }
        }
        total
    }
}

fn check_task_shape(model: &FittedModel, p_star: &Matrix) -> Result<()> {
    if p_star.shape() != (model.contexts.rows(), model.head.vocab()) {
        return Err(LabError::DimensionMismatch(format!(
            "targets are {:?} but the model has {} contexts over {} words",
            p_star.shape(),
            model.contexts.rows(),
            model.head.vocab()
        )));
    }
    Ok(())
}

/// Runs `cfg.steps` optimizer steps in place and returns the loss before
/// each step. With `train_head = false` only the contexts move.
pub fn train(model: &mut FittedModel, p_star: &Matrix, cfg: &TrainConfig, train_head: bool) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_task_shape(model, p_star)?;
    let n = model.contexts.rows();
    let nc = model.contexts.data().len();
    let mut theta = model.contexts.data().to_vec();
    if train_head {
        theta.extend(model.head.params());
    }
    let mut grad = vec![0.0; theta.len()];
    let mut head_grad = Vec::new();
    let mut opt = OptState::new(cfg.optimizer, cfg.lr, theta.len());
    let all: Vec<usize> = (0..n).collect();
    let batch = if cfg.batch == 0 || cfg.batch >= n { n } else { cfg.batch };
    let mut rows = Vec::with_capacity(batch);
    let mut losses = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let rows: &[usize] = if batch == n {
            &all
        } else {
            let start = (step * batch) % n;
            rows.clear();
            rows.extend((0..batch).map(|k| (start + k) % n));
            rows.sort_unstable();
            &rows
        };
        grad[..nc].iter_mut().for_each(|g| *g = 0.0);
        let acc = model.gradient(p_star, rows, &mut grad[..nc]);
        if !acc.loss.is_finite() {
            return Err(LabError::Divergence { step, loss: acc.loss });
        }
        losses.push(acc.loss);
        if train_head {
            acc.flatten_into(&model.head, &mut head_grad)?;
            grad[nc..].copy_from_slice(&head_grad);
        }
        opt.step(&mut theta, &grad);
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(LabError::Divergence { step, loss: f64::NAN });
        }
        model.contexts.data_mut().copy_from_slice(&theta[..nc]);
        if train_head {
            model.head.set_params(&theta[nc..])?;
        }
    }
    Ok(losses)
}

/// Train `spec` on `task` from a seeded initialization and report metrics.
pub fn fit_task(task: &SyntheticTask, spec: &HeadSpec, cfg: &TrainConfig) -> Result<(FittedModel, MetricsReport)> {
    cfg.validate()?;
    let s = &task.spec;
    let mut model = FittedModel::init(spec, s.vocab, s.contexts, s.dim, cfg)?;
    let losses = train(&mut model, &task.p_star, cfg, true)?;
    let (mean_kl, mode_match, final_ce) = model.evaluate(&task.p_star)?;
    Ok((model, MetricsReport { mean_kl, mode_match, final_ce, losses }))
}
