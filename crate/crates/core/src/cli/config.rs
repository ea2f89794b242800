//! Resolved run configurations. Every record loads from JSON with unknown
//! keys rejected; missing keys fall back to the defaults below.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::monofn::ApproxTarget;
use crate::ranklab::{RankTrialSpec, DEFAULT_SURROGATE_BUDGET};
use crate::synth::SyntheticTaskSpec;
use crate::theory::{MseFitConfig, RankOneCorrection, DEFAULT_GRAD_TOL, DEFAULT_RESIDUAL_TOL};
use crate::trainer::{
    HeadSpec, Optimizer, SweepSpec, TrainConfig, DEFAULT_MLP_HIDDEN, DEFAULT_MOS_COMPONENTS, DEFAULT_PLIF_KNOTS,
    DEFAULT_PLIF_RANGE,
};

/// Reads a JSON config; a parse failure names the offending field path.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::Parse(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        LabError::Parse(msg) => LabError::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            LabError::Parse(inner.to_string())
        } else {
            LabError::Parse(format!("at `{path}`: {inner}"))
        }
    })
}

/// Size knobs shared by every head name; each head reads only its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadKnobs {
    pub hidden: usize,
    pub range: f64,
    pub knots: usize,
    pub components: usize,
}

impl Default for HeadKnobs {
    fn default() -> Self {
        HeadKnobs {
            hidden: DEFAULT_MLP_HIDDEN,
            range: DEFAULT_PLIF_RANGE,
            knots: DEFAULT_PLIF_KNOTS,
            components: DEFAULT_MOS_COMPONENTS,
        }
    }
}

impl HeadKnobs {
    pub fn head(&self, name: &str) -> Result<HeadSpec> {
        let spec = match HeadSpec::parse(name)? {
            HeadSpec::LmsMlp { .. } => HeadSpec::LmsMlp { hidden: self.hidden },
            HeadSpec::LmsPlif { .. } => HeadSpec::LmsPlif { range: self.range, knots: self.knots },
            HeadSpec::Mos { .. } => HeadSpec::Mos { components: self.components },
            other => other,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub alpha: f64,
    pub vocab: usize,
    pub contexts: usize,
    pub dim: usize,
    pub seed: u64,
    pub head: String,
    pub knobs: HeadKnobs,
    pub train: TrainConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            alpha: 0.1,
            vocab: 100,
            contexts: 2000,
            dim: 5,
            seed: 0,
            head: "linear".into(),
            knobs: HeadKnobs::default(),
            train: TrainConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn task(&self) -> Result<SyntheticTaskSpec> {
        let spec =
            SyntheticTaskSpec { alpha: self.alpha, vocab: self.vocab, contexts: self.contexts, dim: self.dim, seed: self.seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn head_spec(&self) -> Result<HeadSpec> {
        self.knobs.head(&self.head)
    }

    /// Training runs with the task seed, as in a sweep.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig { seed: self.seed, ..self.train };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub vocabs: Vec<usize>,
    pub dims: Vec<usize>,
    pub heads: Vec<String>,
    pub seeds: Vec<u64>,
    pub contexts: usize,
    pub knobs: HeadKnobs,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            alphas: vec![0.1],
            vocabs: vec![100],
            dims: vec![5, 10],
            heads: vec!["linear".into(), "lms-plif".into()],
            seeds: vec![0, 1, 2],
            contexts: 2000,
            knobs: HeadKnobs::default(),
            train: TrainConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn spec(&self) -> Result<SweepSpec> {
        let heads = self.heads.iter().map(|h| self.knobs.head(h)).collect::<Result<Vec<_>>>()?;
        let spec = SweepSpec {
            alphas: self.alphas.clone(),
            vocabs: self.vocabs.clone(),
            dims: self.dims.clone(),
            heads,
            seeds: self.seeds.clone(),
            contexts: self.contexts,
            train: self.train,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub power: u32,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig { rows: 10, cols: 10, dim: 2, power: 2, trials: 200, seed: 0 }
    }
}

impl PowerConfig {
    pub fn spec(&self) -> RankTrialSpec {
        RankTrialSpec {
            rows: self.rows,
            cols: self.cols,
            dim: self.dim,
            power: self.power,
            trials: self.trials,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SquareConfig {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub proportional: bool,
}

impl Default for SquareConfig {
    fn default() -> Self {
        SquareConfig { n: 5, trials: 500, seed: 0, proportional: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma4Config {
    pub instances: usize,
    pub min_rows: usize,
    pub max_rows: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for Lemma4Config {
    fn default() -> Self {
        Lemma4Config { instances: 50, min_rows: 4, max_rows: 8, dim: 2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub cases: usize,
    pub seed: u64,
    pub budget: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig { cases: 20, seed: 0, budget: DEFAULT_SURROGATE_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxEntConfig {
    pub vocab: usize,
    pub dim: usize,
    pub instances: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub residual_tol: f64,
}

impl Default for MaxEntConfig {
    fn default() -> Self {
        MaxEntConfig {
            vocab: 6,
            dim: 2,
            instances: 50,
            seed: 0,
            grad_tol: DEFAULT_GRAD_TOL,
            residual_tol: DEFAULT_RESIDUAL_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EckartConfig {
    /// Rows `M` of the log-probability target.
    pub vocab: usize,
    pub contexts: usize,
    pub dim: usize,
    pub alpha: f64,
    pub instances: usize,
    /// Instance `i` uses task seed `seed + i`.
    pub seed: u64,
    pub fit: MseFitConfig,
}

impl Default for EckartConfig {
    fn default() -> Self {
        EckartConfig {
            vocab: 20,
            contexts: 30,
            dim: 3,
            alpha: 0.5,
            instances: 50,
            seed: 0,
            fit: MseFitConfig { correction: RankOneCorrection::FreeRankOne, ..MseFitConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlifApproxConfig {
    pub target: ApproxTarget,
    pub range: f64,
    pub knots: usize,
    pub grid: usize,
}

impl Default for PlifApproxConfig {
    fn default() -> Self {
        PlifApproxConfig { target: ApproxTarget::TanhPlusLinear, range: 5.0, knots: 1000, grid: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlifDumpConfig {
    /// PLIF parameters as JSON (`{T, K, v_raw, b0}`); when absent the
    /// interpolant of `target` is dumped.
    pub params: Option<PathBuf>,
    pub target: ApproxTarget,
    pub range: f64,
    pub knots: usize,
    /// Grid limits; default `±1.2 T`.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub points: usize,
}

impl Default for PlifDumpConfig {
    fn default() -> Self {
        PlifDumpConfig {
            params: None,
            target: ApproxTarget::TanhPlusLinear,
            range: 5.0,
            knots: 20,
            lo: None,
            hi: None,
            points: 1001,
        }
    }
}

pub(crate) fn optimizer_by_name(name: &str) -> Result<Optimizer> {
    match name {
        "sgd" => Ok(Optimizer::Sgd),
        "momentum" => Ok(Optimizer::Momentum { beta: 0.9 }),
        "adam" => Ok(Optimizer::default()),
        other => invalid(format!("unknown optimizer '{other}'; valid optimizers: sgd, momentum, adam")),
    }
}
