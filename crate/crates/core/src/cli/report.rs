use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::Result;

/// `lmslab <crate version>` plus the source revision when it was known at
/// build time.
pub fn version_string() -> String {
    match option_env!("LMSLAB_GIT_REV") {
        Some(rev) if !rev.is_empty() => format!("lmslab {} (git {rev})", env!("CARGO_PKG_VERSION")),
        _ => format!("lmslab {}", env!("CARGO_PKG_VERSION")),
    }
}

/// What every subcommand emits. Wall-clock timings are kept out of it so the
/// report is byte-identical across re-runs; see [`PhaseTimer`].
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport<C: Serialize, M: Serialize> {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: C,
    pub metrics: M,
}

impl<C: Serialize, M: Serialize> ExperimentReport<C, M> {
    pub fn new(command: &str, seed: u64, config: C, metrics: M) -> Self {
        ExperimentReport { command: command.to_string(), version: version_string(), seed, config, metrics }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Phase {
    pub phase: String,
    pub seconds: f64,
}

/// Wall-clock per phase, written next to the report as `<report>.timing.json`.
#[derive(Debug)]
pub struct PhaseTimer {
    phases: Vec<Phase>,
    start: Instant,
}

impl Default for PhaseTimer {
    fn default() -> Self {
        PhaseTimer { phases: Vec::new(), start: Instant::now() }
    }
}

impl PhaseTimer {
    /// Closes the running phase under `name` and starts the next one.
    pub fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.phases.push(Phase { phase: name.to_string(), seconds: (now - self.start).as_secs_f64() });
        self.start = now;
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn sidecar_path(report: &Path) -> PathBuf {
        let mut name = report.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".timing.json");
        report.with_file_name(name)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `text` to `path`, or to `stdout` when there is no path.
pub fn emit(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}
