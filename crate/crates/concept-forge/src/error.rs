use thiserror::Error;

/// Unified error type for the whole crate.
#[derive(Debug, Error)]
pub enum ForgeError {
    /// Atoms fail linear independence, or a system is otherwise unusable.
    #[error("degenerate system: {0}")]
    DegenerateSystem(String),

    /// A matrix that must have full rank does not.
    #[error("rank deficiency: {0}")]
    RankDeficiency(String),

    /// Shapes of two objects that must agree do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Rejection sampler exhausted its trial budget.
    #[error("sampling budget exceeded for environment {env}: {trials} trials for {accepted} accepted samples")]
    BudgetExceeded {
        env: usize,
        trials: u64,
        accepted: usize,
    },

    /// Concept mass under the base distribution is numerically zero.
    #[error("infeasible concept in environment {env}: estimated normalizer {normalizer:e}")]
    InfeasibleConcept { env: usize, normalizer: f64 },

    /// Training produced a non-finite loss or parameter.
    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),

    /// A sampled function is not a quadratic polynomial.
    #[error("not quadratic: residual {residual:e} exceeds {tolerance:e}")]
    NotQuadratic { residual: f64, tolerance: f64 },

    /// Too many environments for exhaustive subset enumeration.
    #[error("subset budget exceeded: {environments} environments > {max} supported")]
    SubsetBudget { environments: usize, max: usize },

    /// A recovered valuation column cannot be oriented.
    #[error("sign ambiguity: {0}")]
    SignAmbiguity(String),

    /// Steering direction has zero norm.
    #[error("zero direction: {0}")]
    ZeroDirection(String),

    /// Every ground-truth column is constant; metrics are undefined.
    #[error("degenerate truth: {0}")]
    DegenerateTruth(String),

    /// A configuration file is missing, malformed, or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl ForgeError {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            ForgeError::Config(_) => 2,
            ForgeError::NumericalDivergence(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ForgeError>;
