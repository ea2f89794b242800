use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{0} has no trainable parameters")]
    NoParameters(&'static str),

    #[error("optimization diverged at step {step} (loss = {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("infimum not attained; best value found {best}")]
    InfimumNotAttained { best: f64 },

    #[error("primal solver infeasible; constraint residual {residual:e}")]
    Infeasible { residual: f64 },

    #[error("construction inapplicable: {0}")]
    ConstructionInapplicable(String),

    #[error("rank precondition failed: need rank >= {required}, have {actual}")]
    RankPrecondition { required: usize, actual: usize },

    #[error("surrogate not found after {draws} draws; best |det| = {best_det:e}")]
    SurrogateNotFound { draws: usize, best_det: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            LabError::Divergence { .. }
                | LabError::InfimumNotAttained { .. }
                | LabError::Infeasible { .. }
                | LabError::SurrogateNotFound { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::InvalidArgument(msg.into()))
}
