use thiserror::Error;

/// Errors raised by model construction, fitting, tuning and I/O.
#[derive(Debug, Error)]
pub enum WmcenError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {matrix} at row {row}, column {col}")]
    NonFinite {
        matrix: &'static str,
        row: usize,
        col: usize,
    },

    #[error("at least two samples are required, found {0}")]
    TooFewSamples(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear system for response {response} is singular even after ridge jitter")]
    SingularSystem { response: usize },

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("grid has {points} points, above the limit of {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("every tuning candidate failed")]
    TuningFailed,

    #[error("parse error at line {line}, column {col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WmcenError>;

pub(crate) fn check_dims(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(WmcenError::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        })
    }
}
