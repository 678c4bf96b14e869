use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value returned by {0}")]
    NonFiniteCoefficient(&'static str),

    #[error("diffusion matrix is singular (pivot {pivot:e} below threshold {threshold:e})")]
    SingularDiffusion { pivot: f64, threshold: f64 },

    #[error("argument {value} outside domain {domain}")]
    DomainError { value: f64, domain: &'static str },

    #[error("degenerate time interval [{start}, {end}]")]
    DegenerateInterval { start: f64, end: f64 },

    #[error("problem does not support exact path simulation")]
    NotExactlySimulable,

    #[error("recursion budget of {limit} counted operations exceeded")]
    RecursionBudgetExceeded { limit: u64 },

    #[error("reference oracle budget of {limit} path simulations exceeded")]
    BudgetExceeded { limit: u64 },

    #[error("no reference solution available")]
    MissingReference,

    #[error("terminal condition or coefficients not supported by the closed form")]
    UnsupportedTerminal,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
