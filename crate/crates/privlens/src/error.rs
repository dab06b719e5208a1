use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid function spec: {0}")]
    InvalidSpec(String),

    #[error("recoverability violated at x={x}: W(f(x)|x)={achieved} < rho={required}")]
    RecoverabilityViolation { x: usize, achieved: f64, required: f64 },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("wrong construction case: {0}")]
    WrongCase(String),

    #[error("support chain violated: need supp(p) in supp(q) in supp(q0)")]
    SupportChain,

    #[error("iteration did not converge after {iterations} steps (KKT residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("matrix is singular or ill-conditioned (condition number {0:e})")]
    Singular(f64),

    #[error("rounding infeasible: alpha(0)={alpha0} < {required}")]
    InfeasibleRounding { alpha0: f64, required: f64 },

    #[error("point lies outside the image of the channel (distance {0:e})")]
    OutsideImage(f64),

    #[error("no estimate for type {0:?}")]
    MissingType(Vec<u32>),

    #[error("type space too large: {0} types")]
    TypeSpaceTooLarge(u128),

    #[error("grid budget exceeded: {needed} evaluations > {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("integer scan exhausted at n={0}")]
    ScanExhausted(u64),

    #[error("unsupported instance: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
