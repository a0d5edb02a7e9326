use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("{0} is not a prime modulus in [2, 65536]")]
    NotPrime(u32),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("element {value} is outside the field of size {q}")]
    OutOfField { value: u32, q: u32 },
    #[error("residual square system is singular; the parity-check matrix is not MDS")]
    SingularResidual,
    #[error("exhaustive check needs {needed} evaluations, guard is {guard}")]
    GuardExceeded { needed: u128, guard: u128 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("chain has no remaining variables at step {0}")]
    ChainExhausted(u64),
    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
