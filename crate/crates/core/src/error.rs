use thiserror::Error;

/// Errors surfaced by the decomposition library.
#[derive(Debug, Error)]
pub enum LfError {
    #[error("index out of range: {what} = {got}, valid range 0..{bound}")]
    IndexOutOfRange {
        what: &'static str,
        got: usize,
        bound: usize,
    },

    #[error("shape mismatch: {context} (expected {expected:?}, got {got:?})")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("input contains non-finite samples ({context})")]
    NonFinite { context: String },

    #[error("solver failed in stage `{stage}`: {reason} (relative residual {residual:.3e})")]
    SolveFailure {
        stage: &'static str,
        reason: String,
        residual: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, LfError>;

impl LfError {
    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], got: &[usize]) -> Self {
        LfError::ShapeMismatch {
            context: context.into(),
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }
}
