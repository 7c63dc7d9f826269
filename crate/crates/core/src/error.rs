use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("basis matrix is not square or has non-finite entries: {0}")]
    InvalidBasis(String),
    #[error("basis is rank deficient (|r_{index},{index}| = {value:e})")]
    RankDeficient { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty alphabet at site {0}")]
    EmptyAlphabet(usize),
    #[error("block sampler exceeded the retry cap of {0} consecutive rejections")]
    RetryCapExceeded(u32),
    #[error("state space of {states} states exceeds the cap of {cap}")]
    StateSpaceTooLarge { states: u64, cap: u64 },
    #[error("permutation averaging needs n <= {max}, got n = {n}")]
    PermutationSpaceTooLarge { n: usize, max: usize },
    #[error("kernel is not stationary for the target (residual {0:e})")]
    NotStationary(f64),
    #[error("kernel is not reversible for the target (residual {0:e})")]
    NotReversible(f64),
    #[error("mixing time exceeds {0} steps")]
    NotConverged(u64),
    #[error("failed to parse basis: {0}")]
    Parse(String),
}

impl LatticeError {
    /// Stable variant name, used on diagnostic streams.
    pub fn name(&self) -> &'static str {
        match self {
            LatticeError::InvalidBasis(_) => "InvalidBasis",
            LatticeError::RankDeficient { .. } => "RankDeficient",
            LatticeError::DimensionMismatch { .. } => "DimensionMismatch",
            LatticeError::InvalidParameter(_) => "InvalidParameter",
            LatticeError::EmptyAlphabet(_) => "EmptyAlphabet",
            LatticeError::RetryCapExceeded(_) => "RetryCapExceeded",
            LatticeError::StateSpaceTooLarge { .. } => "StateSpaceTooLarge",
            LatticeError::PermutationSpaceTooLarge { .. } => "PermutationSpaceTooLarge",
            LatticeError::NotStationary(_) => "NotStationary",
            LatticeError::NotReversible(_) => "NotReversible",
            LatticeError::NotConverged(_) => "NotConverged",
            LatticeError::Parse(_) => "Parse",
        }
    }

    /// Errors that signal a runtime limit rather than bad input.
    pub fn is_runtime_limit(&self) -> bool {
        matches!(
            self,
            LatticeError::RetryCapExceeded(_)
                | LatticeError::StateSpaceTooLarge { .. }
                | LatticeError::PermutationSpaceTooLarge { .. }
                | LatticeError::NotConverged(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, LatticeError>;
