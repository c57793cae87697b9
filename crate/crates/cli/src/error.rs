use thiserror::Error;

use sweeper::catchup::CatchupError;
use sweeper::equilibrium::EquilibriumError;
use sweeper::poincare::PoincareError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("Lipschitz audit failed: empirical L2 {l2_empirical:.6} vs declared {l2_declared}, empirical Lf {lf_empirical:.6} vs declared {lf_declared}")]
    AuditFailure { l2_empirical: f64, l2_declared: f64, lf_empirical: f64, lf_declared: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{operation} did not converge: {message}")]
    NonConvergence { operation: &'static str, message: String },
    #[error("degree undefined: {0}")]
    DegreeUndefined(String),
    #[error("{0} validation check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } | CliError::AuditFailure { .. } | CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::NonConvergence { .. } => 3,
            CliError::DegreeUndefined(_) => 4,
            CliError::ChecksFailed(_) => 1,
        }
    }

    pub fn from_catchup(operation: &'static str, e: CatchupError) -> Self {
        match e {
            CatchupError::NonConvergence { .. } | CatchupError::BudgetExhausted { .. } => {
                CliError::NonConvergence { operation, message: e.to_string() }
            }
            other => CliError::Config(other.to_string()),
        }
    }

    pub fn from_poincare(operation: &'static str, e: PoincareError) -> Self {
        match e {
            PoincareError::FieldVanishesOnBoundary { .. } => CliError::DegreeUndefined(e.to_string()),
            PoincareError::NoConvergence { .. } | PoincareError::MeshExhausted { .. } => {
                CliError::NonConvergence { operation, message: e.to_string() }
            }
            PoincareError::Catchup(inner) => CliError::from_catchup(operation, inner),
            other => CliError::Config(other.to_string()),
        }
    }

    pub fn from_equilibrium(operation: &'static str, e: EquilibriumError) -> Self {
        match e {
            EquilibriumError::NotFound { .. }
            | EquilibriumError::WrongSign { .. }
            | EquilibriumError::AmbiguousZeroMode { .. }
            | EquilibriumError::MissingZeroMode { .. } => CliError::NonConvergence { operation, message: e.to_string() },
            EquilibriumError::Catchup(inner) => CliError::from_catchup(operation, inner),
            other => CliError::Config(other.to_string()),
        }
    }
}
