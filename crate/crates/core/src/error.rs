use thiserror::Error;

/// Errors produced by the estimators, samplers and experiment harness.
#[derive(Debug, Error)]
pub enum SirError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("support enumeration too large: C(p, s) = {subsets} exceeds cap {cap}")]
    EnumerationTooLarge { subsets: u128, cap: u128 },

    #[error("factorization failed: {0}")]
    FactorizationFailed(String),

    #[error("theta {theta} gives rho = {rho} outside (0, 1)")]
    ThetaTooLarge { theta: f64, rho: f64 },

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SirError>;

impl SirError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SirError::InvalidInput(msg.into())
    }
}

impl SirError {
    /// Process exit code: 2 for resource limits, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            SirError::ResourceLimit(_) | SirError::EnumerationTooLarge { .. } => 2,
            _ => 1,
        }
    }
}
