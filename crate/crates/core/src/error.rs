use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate image id `{0}`")]
    DuplicateId(String),
    #[error("invalid token grid: {0}")]
    InvalidGrid(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {needed} training vectors, got {got}")]
    TooFewVectors { needed: usize, got: usize },
    #[error("dimension {dim} is not divisible by subspace dimension {sub}")]
    IndivisibleDimension { dim: usize, sub: usize },
    #[error("code {code} out of range for {centroids} centroids")]
    CodeOutOfRange { code: u8, centroids: usize },

    #[error("target count {target} exceeds available tokens {available}")]
    TargetTooLarge { target: usize, available: usize },
    #[error("grid positions do not form a dense rectangle: {0}")]
    NonRectangularGrid(String),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("unknown image id `{0}`")]
    UnknownId(String),
    #[error("index is empty")]
    EmptyIndex,

    #[error("non-finite logit")]
    NonFinite,
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("request timed out")]
    Timeout,
    #[error("service error {status}: {message}")]
    ServiceError { status: u16, message: String },
    #[error("protocol mismatch: {0}")]
    ProtocolMismatch(String),
    #[error("transport error: {0}")]
    Transport(String),

    #[error("query has no positives")]
    NoPositives,
    #[error("no relevance judgments for query `{0}`")]
    MissingQrels(String),
    #[error("no negative scores for query `{0}`")]
    EmptyScores(String),

    #[error("transform `{0}` requires an auxiliary image")]
    MissingAuxImage(&'static str),
    #[error("factor {factor} out of range for `{kind}`")]
    FactorOutOfRange { kind: &'static str, factor: f64 },
    #[error("image error: {0}")]
    Image(String),

    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures caused by the remote scoring service or the path to it.
    pub fn is_remote(&self) -> bool {
        matches!(
            self,
            Error::Timeout
                | Error::ServiceError { .. }
                | Error::ProtocolMismatch(_)
                | Error::Transport(_)
        )
    }
}
