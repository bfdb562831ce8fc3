use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("training data must contain at least two classes (found {found})")]
    SingleClass { found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("metric undefined: no {0} instances among the truths")]
    MissingClass(&'static str),

    #[error("invalid posterior: {0}")]
    InvalidPosterior(String),

    #[error("degenerate beta estimate (mean {mean}, variance {variance})")]
    DegenerateBeta { mean: f64, variance: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed model blob: {0}")]
    Blob(#[from] serde_json::Error),

    #[error("no labeled data available")]
    NoLabeledData,

    #[error("no global model exists after {0} iterations")]
    NoGlobalModel(u64),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
