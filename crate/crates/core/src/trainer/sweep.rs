use serde::{Deserialize, Serialize};

use super::{fit_task, HeadSpec, TrainConfig};
use crate::error::{invalid, Result};
use crate::synth::{build_task, SyntheticTaskSpec};

/// Cartesian product over `alphas × vocabs × dims × seeds × heads`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub alphas: Vec<f64>,
    pub vocabs: Vec<usize>,
    pub dims: Vec<usize>,
    pub heads: Vec<HeadSpec>,
    pub seeds: Vec<u64>,
    pub contexts: usize,
    pub train: TrainConfig,
}

/// One line of the long-format results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub vocab: usize,
    pub contexts: usize,
    pub dim: usize,
    pub head: String,
    pub head_params: String,
    pub mean_kl: f64,
    pub mode_match: f64,
    pub final_ce: f64,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.vocabs.is_empty() || self.dims.is_empty() {
            return invalid("sweep needs at least one alpha, vocab and dim");
        }
        if self.heads.is_empty() || self.seeds.is_empty() {
            return invalid("sweep needs at least one head and seed");
        }
        for h in &self.heads {
            h.validate()?;
        }
        self.train.validate()
    }
}

/// Runs every combination in a fixed order. The task for `(alpha, M, D,
/// seed)` is shared by all heads, and each head trains with the same seed.
pub fn run_sweep(spec: &SweepSpec, mut on_row: impl FnMut(&SweepRow)) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &alpha in &spec.alphas {
        for &vocab in &spec.vocabs {
            for &dim in &spec.dims {
                for &seed in &spec.seeds {
                    let task =
                        build_task(SyntheticTaskSpec { alpha, vocab, contexts: spec.contexts, dim, seed })?;
                    for head in &spec.heads {
                        let cfg = TrainConfig { seed, ..spec.train };
                        let (_, m) = fit_task(&task, head, &cfg)?;
                        let row = SweepRow {
                            alpha,
                            vocab,
                            contexts: spec.contexts,
                            dim,
                            head: head.name().to_string(),
                            head_params: head.knobs(),
                            mean_kl: m.mean_kl,
                            mode_match: m.mode_match,
                            final_ce: m.final_ce,
                            seed,
                        };
                        on_row(&row);
                        rows.push(row);
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Seed average of one `(alpha, M, N, D, head)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub alpha: f64,
    pub vocab: usize,
    pub contexts: usize,
    pub dim: usize,
    pub head: String,
    pub head_params: String,
    pub seeds: usize,
    pub mean_kl: f64,
    pub mode_match: f64,
}

/// Averages rows over seeds; cells keep the order of their first row.
pub fn summarize_rows(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut out: Vec<SweepSummary> = Vec::new();
    for r in rows {
        let cell = out.iter_mut().find(|c| {
            c.alpha == r.alpha
                && c.vocab == r.vocab
                && c.contexts == r.contexts
                && c.dim == r.dim
                && c.head == r.head
                && c.head_params == r.head_params
        });
        match cell {
            Some(c) => {
                c.seeds += 1;
                c.mean_kl += r.mean_kl;
                c.mode_match += r.mode_match;
            }
            None => out.push(SweepSummary {
                alpha: r.alpha,
                vocab: r.vocab,
                contexts: r.contexts,
                dim: r.dim,
                head: r.head.clone(),
                head_params: r.head_params.clone(),
                seeds: 1,
                mean_kl: r.mean_kl,
                mode_match: r.mode_match,
            }),
        }
    }
    for c in &mut out {
        c.mean_kl /= c.seeds as f64;
        c.mode_match /= c.seeds as f64;
    }
    out
}

pub const SWEEP_HEADER: &str = "alpha,M,N,D,head,head_params,mean_kl,mode_match,final_ce,seed";

/// Long-format CSV with a header line.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.alpha, r.vocab, r.contexts, r.dim, r.head, r.head_params, r.mean_kl, r.mode_match, r.final_ce, r.seed
        ));
    }
    out
}
