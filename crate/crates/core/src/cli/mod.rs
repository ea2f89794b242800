//! The `lmslab` command line: one subcommand per experiment, JSON configs
//! with flag overrides, JSON reports and long-format CSV.
//!
//! Precedence is built-in defaults, then `--config FILE`, then flags. Exit
//! codes: 0 on success, 2 for configuration errors, 3 for numerical
//! failures (divergence, unattained infimum, infeasible primal, surrogate
//! not found).

mod config;
mod report;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    load_config, parse_config, EckartConfig, HeadKnobs, Lemma4Config, MaxEntConfig, PlifApproxConfig, PlifDumpConfig,
    PowerConfig, SquareConfig, SurrogateConfig, SweepConfig, SynthConfig,
};
pub use report::{emit, to_json, version_string, ExperimentReport, Phase, PhaseTimer};

use crate::error::{invalid, LabError, Result};
use crate::monofn::{plif_approx, plif_interpolate_fn, ApproxTarget, Plif};
use crate::numkit::Rng;
use crate::ranklab::{
    lemma4_trials, power_rank_trials, square_fullrank_trials, surrogate_trials, Lemma4Trial, SurrogateTrial,
};
use crate::synth::{build_task, SyntheticTaskSpec};
use crate::theory::{duality_gap, mse_rank_fit, DualityReport, MaxEntInstance, MseFitConfig, RankOneCorrection};
use crate::trainer::{fit_task, run_sweep, summarize_rows, sweep_csv, SweepRow, SweepSummary, TrainConfig};

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "LMSLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lmslab", version, about = "Softmax-bottleneck laboratory")]
pub struct Cli {
    /// Worker threads; overrides the LMSLAB_THREADS environment variable.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build one Dirichlet task, train one head, report KL and mode match.
    Synth(SynthArgs),
    /// Cartesian product of tasks and heads; one CSV row per run.
    Sweep(SweepArgs),
    /// Rank experiments for pointwise functions of low-rank matrices.
    #[command(subcommand)]
    Ranklab(RanklabCommand),
    /// Eckart-Young and maximum-entropy verifiers.
    #[command(subcommand)]
    Theory(TheoryCommand),
    /// Interpolate an increasing target with a PLIF and measure the error.
    PlifApprox(PlifApproxArgs),
    /// Sample a PLIF on a grid as `x,f_x` CSV.
    PlifDump(PlifDumpArgs),
}

#[derive(Debug, Subcommand)]
pub enum RanklabCommand {
    /// Rank of Hadamard powers of Gaussian rank-d products.
    Power(PowerArgs),
    /// Full-rank frequency after squaring rank-(n-1) matrices.
    Square(SquareArgs),
    /// Indicator construction on distinct dot products.
    Lemma4(Lemma4Args),
    /// Increasing surrogates for rank-lifting parity functions.
    Surrogate(SurrogateArgs),
}

#[derive(Debug, Subcommand)]
pub enum TheoryCommand {
    /// Dual cross-entropy minimum against primal maximum entropy.
    Maxent(MaxEntArgs),
    /// Rank-constrained MSE fits of log-probability targets against the bound.
    EckartYoung(EckartArgs),
}

#[derive(Debug, Default, Args)]
pub struct IoArgs {
    /// JSON config; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Report destination (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write per-run or per-trial rows as CSV.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// sgd, momentum or adam (default hyper-parameters).
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Contexts per step; 0 for full batch.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct KnobArgs {
    /// Hidden units of lms-mlp.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Half-range T of lms-plif.
    #[arg(long)]
    pub range: Option<f64>,
    /// Segments K of lms-plif.
    #[arg(long)]
    pub knots: Option<usize>,
    /// Mixture components of mos.
    #[arg(long)]
    pub components: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub contexts: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// linear, sigsoftmax, lms-mlp, lms-plif or mos.
    #[arg(long)]
    pub head: Option<String>,
    #[command(flatten)]
    pub knobs: KnobArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub vocabs: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub heads: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub contexts: Option<usize>,
    #[command(flatten)]
    pub knobs: KnobArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub power: Option<u32>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SquareArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Force two proportional columns in every input.
    #[arg(long)]
    pub proportional: bool,
}

#[derive(Debug, Args)]
pub struct Lemma4Args {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub min_rows: Option<usize>,
    #[arg(long)]
    pub max_rows: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SurrogateArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Draws per case before giving up.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MaxEntArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub residual_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EckartArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub contexts: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// free-rank-one or partition-offset.
    #[arg(long)]
    pub correction: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlifApproxArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// tanh-plus-linear, exp, cubic-plus-linear or sigsoftmax.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long)]
    pub knots: Option<usize>,
    /// Points of the evaluation grid.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlifDumpArgs {
    #[command(flatten)]
    pub io: IoArgs,
    /// PLIF parameters as JSON; overrides --target.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long)]
    pub knots: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

macro_rules! set {
    ($($dst:expr => $src:expr),* $(,)?) => {
        $( if let Some(v) = $src.clone() { $dst = v; } )*
    };
}

impl TrainArgs {
    fn apply(&self, t: &mut TrainConfig) -> Result<()> {
        set!(t.steps => self.steps, t.lr => self.lr, t.batch => self.batch, t.init_scale => self.init_scale);
        if let Some(name) = &self.optimizer {
            t.optimizer = config::optimizer_by_name(name)?;
        }
        Ok(())
    }
}

impl KnobArgs {
    fn apply(&self, k: &mut HeadKnobs) {
        set!(k.hidden => self.hidden, k.range => self.range, k.knots => self.knots, k.components => self.components);
    }
}

/// Exit status for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(err: &LabError) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

/// Sizes the global rayon pool from `flag` or [`THREADS_ENV`]. A pool that
/// already exists is left alone.
pub fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                LabError::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return invalid("thread count must be positive");
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = if e.use_stderr() { e.render().to_string() } else { e.to_string() };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let result = configure_threads(cli.threads).and_then(|_| execute(cli.command, stdout, stderr));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Everything a finished subcommand hands back for writing.
struct Outcome {
    report: String,
    csv: Option<String>,
    timer: PhaseTimer,
}

fn outcome<C: Serialize, M: Serialize>(
    command: &str,
    seed: u64,
    config: C,
    metrics: M,
    csv: Option<String>,
    timer: PhaseTimer,
) -> Result<Outcome> {
    let report = to_json(&ExperimentReport::new(command, seed, config, metrics))?;
    Ok(Outcome { report, csv, timer })
}

pub fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let (io, result) = match command {
        Command::Synth(a) => {
            let r = run_synth(&a);
            (a.io, r)
        }
        Command::Sweep(a) => {
            let r = run_sweep_cmd(&a, stderr);
            (a.io, r)
        }
        Command::Ranklab(RanklabCommand::Power(a)) => {
            let r = run_power(&a);
            (a.io, r)
        }
        Command::Ranklab(RanklabCommand::Square(a)) => {
            let r = run_square(&a);
            (a.io, r)
        }
        Command::Ranklab(RanklabCommand::Lemma4(a)) => {
            let r = run_lemma4(&a);
            (a.io, r)
        }
        Command::Ranklab(RanklabCommand::Surrogate(a)) => {
            let r = run_surrogate(&a);
            (a.io, r)
        }
        Command::Theory(TheoryCommand::Maxent(a)) => {
            let r = run_maxent(&a);
            (a.io, r)
        }
        Command::Theory(TheoryCommand::EckartYoung(a)) => {
            let r = run_eckart(&a);
            (a.io, r)
        }
        Command::PlifApprox(a) => {
            let r = run_plif_approx(&a);
            (a.io, r)
        }
        Command::PlifDump(a) => return run_plif_dump(&a, stdout),
    };
    let out = result?;
    if let (Some(path), Some(csv)) = (&io.csv, &out.csv) {
        std::fs::write(path, csv)?;
    }
    emit(io.out.as_deref(), &out.report, stdout)?;
    match &io.out {
        Some(path) => std::fs::write(PhaseTimer::sidecar_path(path), to_json(&out.timer.phases())?)?,
        None => {
            let parts: Vec<String> = out.timer.phases().iter().map(|p| format!("{} {:.3}s", p.phase, p.seconds)).collect();
            writeln!(stderr, "timing: {}", parts.join(", "))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct SynthMetrics {
    #[serde(flatten)]
    row: SweepRow,
    task_mean_entropy: f64,
    initial_loss: f64,
}

fn resolve_synth(a: &SynthArgs) -> Result<SynthConfig> {
    let mut cfg: SynthConfig = load_config(a.io.config.as_deref())?;
    set!(
        cfg.alpha => a.alpha,
        cfg.vocab => a.vocab,
        cfg.contexts => a.contexts,
        cfg.dim => a.dim,
        cfg.seed => a.seed,
        cfg.head => a.head,
    );
    a.knobs.apply(&mut cfg.knobs);
    a.train.apply(&mut cfg.train)?;
    Ok(cfg)
}

fn run_synth(a: &SynthArgs) -> Result<Outcome> {
    let cfg = resolve_synth(a)?;
    let spec = cfg.task()?;
    let head = cfg.head_spec()?;
    let train = cfg.train_config()?;
    let mut timer = PhaseTimer::default();
    let task = build_task(spec)?;
    timer.lap("build_task");
    let (_, m) = fit_task(&task, &head, &train)?;
    timer.lap("train");
    let row = SweepRow {
        alpha: spec.alpha,
        vocab: spec.vocab,
        contexts: spec.contexts,
        dim: spec.dim,
        head: head.name().to_string(),
        head_params: head.knobs(),
        mean_kl: m.mean_kl,
        mode_match: m.mode_match,
        final_ce: m.final_ce,
        seed: spec.seed,
    };
    let csv = sweep_csv(std::slice::from_ref(&row));
    let metrics =
        SynthMetrics { row, task_mean_entropy: task.mean_entropy(), initial_loss: m.losses.first().copied().unwrap_or(f64::NAN) };
    outcome("synth", cfg.seed, cfg, metrics, Some(csv), timer)
}

#[derive(Debug, Clone, Serialize)]
struct SweepMetrics {
    rows: Vec<SweepRow>,
    summary: Vec<SweepSummary>,
}

fn run_sweep_cmd(a: &SweepArgs, stderr: &mut dyn Write) -> Result<Outcome> {
    let mut cfg: SweepConfig = load_config(a.io.config.as_deref())?;
    set!(
        cfg.alphas => a.alphas,
        cfg.vocabs => a.vocabs,
        cfg.dims => a.dims,
        cfg.heads => a.heads,
        cfg.seeds => a.seeds,
        cfg.contexts => a.contexts,
    );
    a.knobs.apply(&mut cfg.knobs);
    a.train.apply(&mut cfg.train)?;
    let spec = cfg.spec()?;
    let total = spec.alphas.len() * spec.vocabs.len() * spec.dims.len() * spec.seeds.len() * spec.heads.len();
    let mut timer = PhaseTimer::default();
    let mut done = 0;
    let rows = run_sweep(&spec, |r| {
        done += 1;
        let _ = writeln!(stderr, "[{done}/{total}] alpha={} M={} D={} {} seed={} kl={:.4}", r.alpha, r.vocab, r.dim, r.head, r.seed, r.mean_kl);
    })?;
    timer.lap("sweep");
    let csv = sweep_csv(&rows);
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let summary = summarize_rows(&rows);
    outcome("sweep", seed, cfg, SweepMetrics { rows, summary }, Some(csv), timer)
}

fn rank_csv(ranks: &[usize]) -> String {
    let mut s = String::from("trial,rank\n");
    for (t, r) in ranks.iter().enumerate() {
        s.push_str(&format!("{t},{r}\n"));
    }
    s
}

fn run_power(a: &PowerArgs) -> Result<Outcome> {
    let mut cfg: PowerConfig = load_config(a.io.config.as_deref())?;
    set!(
        cfg.rows => a.rows,
        cfg.cols => a.cols,
        cfg.dim => a.dim,
        cfg.power => a.power,
        cfg.trials => a.trials,
        cfg.seed => a.seed,
    );
    let mut timer = PhaseTimer::default();
    let report = power_rank_trials(&cfg.spec())?;
    timer.lap("trials");
    let csv = rank_csv(&report.ranks);
    outcome("ranklab power", cfg.seed, cfg, report, Some(csv), timer)
}

fn run_square(a: &SquareArgs) -> Result<Outcome> {
    let mut cfg: SquareConfig = load_config(a.io.config.as_deref())?;
    set!(cfg.n => a.n, cfg.trials => a.trials, cfg.seed => a.seed);
    if a.proportional {
        cfg.proportional = true;
    }
    let mut timer = PhaseTimer::default();
    let report = square_fullrank_trials(cfg.n, cfg.trials, cfg.seed, cfg.proportional)?;
    timer.lap("trials");
    let csv = rank_csv(&report.ranks);
    outcome("ranklab square", cfg.seed, cfg, report, Some(csv), timer)
}

#[derive(Debug, Clone, Serialize)]
struct Lemma4Metrics {
    trials: Vec<Lemma4Trial>,
    precondition_passed: usize,
    full_rank: usize,
}

fn run_lemma4(a: &Lemma4Args) -> Result<Outcome> {
    let mut cfg: Lemma4Config = load_config(a.io.config.as_deref())?;
    set!(
        cfg.instances => a.instances,
        cfg.min_rows => a.min_rows,
        cfg.max_rows => a.max_rows,
        cfg.dim => a.dim,
        cfg.seed => a.seed,
    );
    let mut timer = PhaseTimer::default();
    let trials = lemma4_trials(cfg.instances, cfg.min_rows, cfg.max_rows, cfg.dim, cfg.seed)?;
    timer.lap("trials");
    let mut csv = String::from("trial,M,N,precondition_passed,rank\n");
    for (t, r) in trials.iter().enumerate() {
        let rank = r.rank.map(|x| x.to_string()).unwrap_or_default();
        csv.push_str(&format!("{t},{},{},{},{rank}\n", r.rows, r.cols, r.precondition_passed));
    }
    let precondition_passed = trials.iter().filter(|t| t.precondition_passed).count();
    let full_rank = trials.iter().filter(|t| t.rank == Some(t.rows)).count();
    let metrics = Lemma4Metrics { trials, precondition_passed, full_rank };
    outcome("ranklab lemma4", cfg.seed, cfg, metrics, Some(csv), timer)
}

#[derive(Debug, Clone, Serialize)]
struct SurrogateMetrics {
    trials: Vec<SurrogateTrial>,
    found: usize,
    verified: usize,
}

fn run_surrogate(a: &SurrogateArgs) -> Result<Outcome> {
    let mut cfg: SurrogateConfig = load_config(a.io.config.as_deref())?;
    set!(cfg.cases => a.cases, cfg.seed => a.seed, cfg.budget => a.budget);
    let mut timer = PhaseTimer::default();
    let trials = surrogate_trials(cfg.cases, cfg.seed, cfg.budget)?;
    timer.lap("trials");
    let mut csv = String::from("case,size,rank_a,target_rank,found,draws,rank,increasing\n");
    for (t, r) in trials.iter().enumerate() {
        csv.push_str(&format!(
            "{t},{},{},{},{},{},{},{}\n",
            r.size, r.rank_a, r.target_rank, r.found, r.draws, r.rank, r.increasing
        ));
    }
    let found = trials.iter().filter(|t| t.found).count();
    let verified = trials.iter().filter(|t| t.found && t.increasing && t.rank >= t.target_rank).count();
    outcome("ranklab surrogate", cfg.seed, cfg, SurrogateMetrics { trials, found, verified }, Some(csv), timer)
}

#[derive(Debug, Clone, Serialize)]
struct MaxEntMetrics {
    instances: Vec<DualityReport>,
    max_gap: f64,
    gibbs_violations: usize,
}

/// Instance `i` of a maxent batch: seed stream `(seed, i)`.
pub fn maxent_instance(vocab: usize, dim: usize, seed: u64, index: usize) -> Result<MaxEntInstance> {
    MaxEntInstance::random(vocab, dim, &mut Rng::stream(seed, index as u64))
}

fn run_maxent(a: &MaxEntArgs) -> Result<Outcome> {
    let mut cfg: MaxEntConfig = load_config(a.io.config.as_deref())?;
    set!(
        cfg.vocab => a.vocab,
        cfg.dim => a.dim,
        cfg.instances => a.instances,
        cfg.seed => a.seed,
        cfg.grad_tol => a.grad_tol,
        cfg.residual_tol => a.residual_tol,
    );
    let mut timer = PhaseTimer::default();
    let reports: Vec<DualityReport> = (0..cfg.instances)
        .into_par_iter()
        .map(|i| duality_gap(&maxent_instance(cfg.vocab, cfg.dim, cfg.seed, i)?, cfg.grad_tol, cfg.residual_tol))
        .collect::<Result<_>>()?;
    timer.lap("solve");
    let mut csv = String::from("instance,min_ce,max_ent,gap,entropy_p_star\n");
    for (i, r) in reports.iter().enumerate() {
        csv.push_str(&format!("{i},{},{},{},{}\n", r.min_ce, r.max_ent, r.gap, r.entropy_p_star));
    }
    let max_gap = reports.iter().map(|r| r.gap).fold(0.0, f64::max);
    let gibbs_violations = reports.iter().filter(|r| r.min_ce < r.entropy_p_star - 1e-9).count();
    let metrics = MaxEntMetrics { instances: reports, max_gap, gibbs_violations };
    outcome("theory maxent", cfg.seed, cfg, metrics, Some(csv), timer)
}

#[derive(Debug, Clone, Serialize)]
pub struct EckartRow {
    pub instance: usize,
    pub bound: f64,
    pub error: f64,
    /// `error / bound`.
    pub ratio: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
struct EckartMetrics {
    instances: Vec<EckartRow>,
    /// `min (error − bound)`; never below `−1e-6` if the bound holds.
    min_margin: f64,
    max_ratio: f64,
}

/// Fits instance `i` of an Eckart-Young batch: the transposed log-probability
/// matrix of the task with seed `seed + i`.
pub fn eckart_instance(cfg: &EckartConfig, index: usize) -> Result<EckartRow> {
    let seed = cfg.seed.wrapping_add(index as u64);
    let task = build_task(SyntheticTaskSpec {
        alpha: cfg.alpha,
        vocab: cfg.vocab,
        contexts: cfg.contexts,
        dim: cfg.dim,
        seed,
    })?;
    let target = task.p_star.map(f64::ln).transpose();
    let fit = mse_rank_fit(&target, cfg.dim, &MseFitConfig { seed, ..cfg.fit.clone() })?;
    let ratio = if fit.bound > 0.0 { fit.error / fit.bound } else { f64::NAN };
    Ok(EckartRow { instance: index, bound: fit.bound, error: fit.error, ratio, steps: fit.steps })
}

fn run_eckart(a: &EckartArgs) -> Result<Outcome> {
    let mut cfg: EckartConfig = load_config(a.io.config.as_deref())?;
    set!(
        cfg.vocab => a.vocab,
        cfg.contexts => a.contexts,
        cfg.dim => a.dim,
        cfg.alpha => a.alpha,
        cfg.instances => a.instances,
        cfg.seed => a.seed,
        cfg.fit.steps => a.steps,
    );
    if let Some(c) = &a.correction {
        cfg.fit.correction = match c.as_str() {
            "free-rank-one" => RankOneCorrection::FreeRankOne,
            "partition-offset" => RankOneCorrection::PartitionOffset,
            other => return invalid(format!("unknown correction '{other}'; valid: free-rank-one, partition-offset")),
        };
    }
    let mut timer = PhaseTimer::default();
    let rows: Vec<EckartRow> =
        (0..cfg.instances).into_par_iter().map(|i| eckart_instance(&cfg, i)).collect::<Result<_>>()?;
    timer.lap("fit");
    let mut csv = String::from("instance,bound,error,ratio,steps\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{}\n", r.instance, r.bound, r.error, r.ratio, r.steps));
    }
    let min_margin = rows.iter().map(|r| r.error - r.bound).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let metrics = EckartMetrics { instances: rows, min_margin, max_ratio };
    outcome("theory eckart-young", cfg.seed, cfg, metrics, Some(csv), timer)
}

fn run_plif_approx(a: &PlifApproxArgs) -> Result<Outcome> {
    let mut cfg: PlifApproxConfig = load_config(a.io.config.as_deref())?;
    if let Some(t) = &a.target {
        cfg.target = ApproxTarget::parse(t)?;
    }
    set!(cfg.range => a.range, cfg.knots => a.knots, cfg.grid => a.grid);
    let mut timer = PhaseTimer::default();
    let report = plif_approx(cfg.target, cfg.range, cfg.knots, cfg.grid)?;
    timer.lap("interpolate");
    let csv = format!(
        "target,range,knots,grid,error_bound,max_error\n{},{},{},{},{},{}\n",
        cfg.target.name(),
        report.range,
        report.knots,
        report.grid_points,
        report.error_bound,
        report.max_error
    );
    outcome("plif-approx", 0, cfg, report, Some(csv), timer)
}

#[derive(Debug, Clone, Serialize)]
struct PlifDumpMetrics {
    range: f64,
    knots: usize,
    lo: f64,
    hi: f64,
    points: usize,
}

/// `x,f_x` CSV goes to `--csv` or stdout; the report is written only with
/// `--out`.
fn run_plif_dump(a: &PlifDumpArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg: PlifDumpConfig = load_config(a.io.config.as_deref())?;
    if let Some(t) = &a.target {
        cfg.target = ApproxTarget::parse(t)?;
    }
    if a.params.is_some() {
        cfg.params = a.params.clone();
    }
    set!(cfg.range => a.range, cfg.knots => a.knots, cfg.points => a.points);
    if a.lo.is_some() {
        cfg.lo = a.lo;
    }
    if a.hi.is_some() {
        cfg.hi = a.hi;
    }
    let plif: Plif = match &cfg.params {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| LabError::Parse(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => plif_interpolate_fn(|x| cfg.target.eval(x), cfg.range, cfg.knots)?,
    };
    let t = plif.range();
    let lo = cfg.lo.unwrap_or(-1.2 * t);
    let hi = cfg.hi.unwrap_or(1.2 * t);
    if !(lo < hi) || cfg.points < 2 {
        return invalid("plif-dump needs lo < hi and at least two points");
    }
    let mut csv = String::from("x,f_x\n");
    for i in 0..cfg.points {
        let x = lo + (hi - lo) * i as f64 / (cfg.points - 1) as f64;
        csv.push_str(&format!("{x},{}\n", plif.value(x)));
    }
    emit(a.io.csv.as_deref(), &csv, stdout)?;
    if let Some(out) = &a.io.out {
        let metrics = PlifDumpMetrics { range: t, knots: plif.knots(), lo, hi, points: cfg.points };
        std::fs::write(out, to_json(&ExperimentReport::new("plif-dump", 0, cfg, metrics))?)?;
    }
    Ok(())
}
