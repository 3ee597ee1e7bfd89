use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("factorization lost positive definiteness: {0}")]
    Numerical(String),

    #[error("posterior mean is stale after a hallucinated update")]
    StaleMean,

    #[error("every candidate has a numerically zero posterior deviation")]
    DegeneratePosterior,

    #[error("ground set of size {size} exceeds the enumeration cap of {cap}")]
    Capacity { size: usize, cap: usize },

    #[error("cannot draw a {k}-subset: kernel has numerical rank {rank}")]
    InfeasibleK { k: usize, rank: usize },

    #[error("point {point:?} lies outside the domain box")]
    OutOfDomain { point: Vec<f64> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
