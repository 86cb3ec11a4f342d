use alloc::boxed::Box;
use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("input too short: need {needed}, have {have}")]
    TooShort { needed: usize, have: usize },
    #[error("noise clip is silent")]
    SilentNoise,
    #[error("training set has a single class")]
    SingleClass,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("solver did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: Box<Error> },
}

impl Error {
    pub fn in_fold(self, fold: usize) -> Error {
        match self {
            e @ Error::Fold { .. } => e,
            e => Error::Fold { fold, source: Box::new(e) },
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
