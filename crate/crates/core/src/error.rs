use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid tree shape d={d}, n={n}: {reason}")]
    InvalidShape { d: u32, n: u32, reason: &'static str },

    #[error("leaf count {d}^{n} does not fit in 64 bits")]
    LeafCountOverflow { d: u32, n: u32 },

    #[error("leaf address has {got} digits, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("digit {digit} at position {position} is not below d={d}")]
    DigitOutOfRange { position: usize, digit: u32, d: u32 },

    #[error("flat leaf index {index} is out of range for {count} leaves")]
    IndexOutOfRange { index: u64, count: u64 },

    #[error("matrix is not positive semidefinite: pivot {pivot:e} at row {row}")]
    NotPositiveSemidefinite { row: usize, pivot: f64 },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("dimension {dim} exceeds limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{requested} leaves exceed the full-field budget of {budget}")]
    BudgetExceeded { requested: u64, budget: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no interior root: f(0) = {f0:e} is not positive")]
    NoInteriorRoot { f0: f64 },

    #[error(
        "all conditioning weights are below 1e-300 (largest log-weight {max_log_weight:.3}); \
         use a smaller n or a tilted estimator"
    )]
    DenominatorUnderflow { max_log_weight: f64 },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}
