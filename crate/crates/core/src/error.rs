use std::fmt;
use std::io;

use crate::loss::LossKind;

/// The three sparse feature groups of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureGroup {
    Global,
    User,
    Item,
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureGroup::Global => "global",
            FeatureGroup::User => "user",
            FeatureGroup::Item => "item",
        })
    }
}

/// Why a single text instance line was rejected.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("empty line")]
    Empty,
    #[error("missing {0}")]
    MissingField(&'static str),
    #[error("invalid {what} `{token}`")]
    BadNumber { what: &'static str, token: String },
    #[error("non-finite {what} `{token}`")]
    NonFinite { what: &'static str, token: String },
    #[error("malformed feature token `{0}` (expected index:value)")]
    BadToken(String),
    #[error("expected {expected} feature tokens, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("duplicate {group} feature index {index}")]
    DuplicateIndex { group: FeatureGroup, index: u32 },
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{group} feature index {index} out of range (dimension {dim})")]
    DimensionMismatch {
        group: FeatureGroup,
        index: u32,
        dim: usize,
    },
    #[error("label {label} is invalid for {loss} loss (expected 0 or 1)")]
    InvalidLabel { label: f64, loss: LossKind },
    #[error("line {line}: {group} feature index {index} out of range (dimension {dim})")]
    IndexOutOfRange {
        line: usize,
        group: FeatureGroup,
        index: u32,
        dim: usize,
    },
    #[error("invalid sparse vector: {0}")]
    InvalidSparse(String),
    #[error("training diverged at epoch {epoch}, instance {instance}: non-finite value")]
    Divergence { epoch: usize, instance: u64 },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
    #[error("corrupt buffer: {0}")]
    CorruptBuffer(String),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("model dimensions {model} do not match data dimensions {data}")]
    IncompatibleDims { model: String, data: String },
    #[error("feature generation: {0}")]
    Feature(String),
    #[error("evaluation: {0}")]
    Eval(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status for the CLI: 1 usage/config, 2 data, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Divergence { .. } => 3,
            _ => 2,
        }
    }
}
