use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ingestion
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` holds no parsable value")]
    AllMissing(String),

    // series preparation
    #[error("fit range has zero variance")]
    DegenerateRange,
    #[error("fit range is empty or out of bounds")]
    EmptyRange,
    #[error("series too short: need {needed} samples, have {available}")]
    SeriesTooShort { needed: usize, available: usize },

    // numerics
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("singular normal equations")]
    SingularNormalEquations,
    #[error("damped normal equations unsolvable up to mu_max")]
    SingularSystem,
    #[error("objective became non-finite after {iterations} iterations")]
    NonFiniteObjective { iterations: usize, trace: Vec<f64> },
    #[error("non-finite gradient component at index {0}")]
    NonFiniteGradient(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("insufficient history: need {needed} values, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("no candidate order could be fitted")]
    NoFeasibleOrder,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // framework
    #[error("training failed at step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{method}: {source}")]
    MethodFailed {
        method: String,
        #[source]
        source: Box<Error>,
    },
    #[error("validation series too short for {needed} forecast origins (have {available})")]
    InsufficientValidation { needed: usize, available: usize },
    #[error("ensembles do not match: {0}")]
    MismatchedEnsembles(String),

    // metrics
    #[error("no forecasts to evaluate")]
    Empty,
    #[error("variance needs at least 2 forecasts, have {0}")]
    TooFewForecasts(usize),

    // storage
    #[error("format error at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(line: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            line,
            reason: reason.into(),
        }
    }

    /// Innermost error, looking through step and method tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::StepFailed { source, .. } | Error::MethodFailed { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures that originate in model fitting rather than in the
    /// input data or its layout.
    pub fn is_training_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::SingularNormalEquations
                | Error::SingularSystem
                | Error::NonFiniteObjective { .. }
                | Error::NonFiniteGradient(_)
                | Error::NoFeasibleOrder
        )
    }
}
