use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("margin must be a positive integer, got {0}")]
    InvalidMargin(u32),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("{what} {index} has zero norm (below {epsilon:e})")]
    ZeroNorm {
        what: &'static str,
        index: usize,
        epsilon: f64,
    },

    #[error("label {label} at sample {index} is outside 0..{classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("non-finite gradient in parameter {param} at element {element} (iteration {iteration})")]
    NonFiniteGradient {
        iteration: usize,
        param: String,
        element: usize,
    },

    #[error("layer {layer} produced non-finite activations (training diverged?)")]
    NonFiniteActivation { layer: usize },

    #[error("function returned a non-finite value while probing coordinate {coordinate}")]
    NonFiniteFunction { coordinate: usize },

    #[error("bad IDX magic at byte offset {offset}: {found:#010x}")]
    BadMagic { offset: usize, found: u32 },

    #[error("truncated IDX payload at byte offset {offset}: need {needed} bytes, {available} available")]
    TruncatedPayload {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("IDX dimension mismatch at byte offset {offset}: {detail}")]
    DimensionMismatch { offset: usize, detail: String },

    #[error("split fractions must be nonnegative and sum to 1, got {0:?}")]
    InvalidFractions(Vec<f64>),

    #[error("split `{which}` is empty ({total} samples, fraction {fraction})")]
    EmptySplit {
        which: &'static str,
        total: usize,
        fraction: f64,
    },

    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("invalid parameter file: {0}")]
    BadParamsFile(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Debug,
        actual: impl std::fmt::Debug,
    ) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
