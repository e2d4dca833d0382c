use thiserror::Error;

/// Errors raised across the estimation, testing and simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("rank deficient: eigenvalue {index} is {value:e} (< 1e-12)")]
    RankDeficient { index: usize, value: f64 },

    #[error("ill-conditioned regressors: condition number {condition:e}")]
    IllConditioned { condition: f64 },

    #[error("singular eigenvalues: D2[{index}] = {value:e}")]
    SingularEigenvalues { index: usize, value: f64 },

    #[error("degenerate variance: phi^2 = {0:e}")]
    DegenerateVariance(f64),

    #[error("degenerate tuning: {0}")]
    DegenerateTuning(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-numeric value '{value}' in column '{column}' at line {line}")]
    NonNumericColumn {
        column: String,
        line: usize,
        value: String,
    },

    #[error("missing value in column '{column}' at line {line}")]
    MissingValues { column: String, line: usize },

    #[error("series too short: {0}")]
    TooShortSeries(String),

    #[error("input/output: {0}")]
    Io(String),

    #[error("at recursion step t = {t}: {source}")]
    AtStep {
        t: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, t: usize) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            other => Error::AtStep {
                t,
                source: Box::new(other),
            },
        }
    }

    /// The underlying error with any recursion-step context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures caused by the numbers rather than by the inputs' shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::RankDeficient { .. }
                | Error::IllConditioned { .. }
                | Error::SingularEigenvalues { .. }
                | Error::DegenerateVariance(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
