use alloc::string::String;

/// Every failure the library can report.
///
/// [`Error::name`] gives a stable, machine-readable identifier that the CLI
/// prints on failure.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("point is not strictly inside the polyhedron")]
    NotInterior,
    #[error("barrier Hessian is numerically singular")]
    SingularH,
    #[error("volumetric centering did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("cut direction has (near) zero norm")]
    DegenerateDirection,
    #[error("polyhedron interior collapsed (min slack {min_slack:e})")]
    CollapsedPolytope { min_slack: f64 },
    #[error("invalid privacy budget: {0}")]
    InvalidBudget(String),
    #[error("eps_dp = {eps} is outside the supported range (0, {limit})")]
    PrivacyBudgetTooLarge { eps: f64, limit: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("privacy ledger violation: {0}")]
    LedgerViolation(String),
    #[error("no fresh samples in the batch")]
    EmptyFreshBatch,
    #[error("problem has no true-loss oracle")]
    OracleUnavailable,
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("configuration rejected: {0}")]
    ConfigRejected(String),
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::NotInterior => "NotInterior",
            Error::SingularH => "SingularH",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DegenerateDirection => "DegenerateDirection",
            Error::CollapsedPolytope { .. } => "CollapsedPolytope",
            Error::InvalidBudget(_) => "InvalidBudget",
            Error::PrivacyBudgetTooLarge { .. } => "PrivacyBudgetTooLarge",
            Error::InvalidInput(_) => "InvalidInput",
            Error::LedgerViolation(_) => "LedgerViolation",
            Error::EmptyFreshBatch => "EmptyFreshBatch",
            Error::OracleUnavailable => "OracleUnavailable",
            Error::UnknownProblem(_) => "UnknownProblem",
            Error::ConfigRejected(_) => "ConfigRejected",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
