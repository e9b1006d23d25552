use ipac_sdp::{RandomizationError, SdpError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {}", format_issues(.0))]
    InvalidConfig(Vec<ConfigIssue>),
    #[error("singular information: EFIM has no information along {directions:?}")]
    SingularInformation {
        /// Unit directions (position coordinates) with no information.
        directions: Vec<Vec<f64>>,
    },
    #[error("infeasible constraints: {}", .binding.join(", "))]
    Infeasible {
        /// Constraint labels such as `peb[k=2]` or `rate[k=1]`.
        binding: Vec<String>,
    },
    #[error("no feasible candidate after {trials} randomization trials (violation {violation:e})")]
    NoFeasibleCandidate { trials: usize, violation: f64 },
    #[error("solver did not converge: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid json")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<RandomizationError> for CoreError {
    fn from(e: RandomizationError) -> Self {
        match e {
            RandomizationError::NoFeasibleCandidate { violation, trials, .. } => {
                CoreError::NoFeasibleCandidate { trials, violation }
            }
            RandomizationError::InvalidInput(m) => CoreError::InvalidArgument(m),
        }
    }
}

/// One problem found while validating a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

impl CoreError {
    /// Short machine-readable status used in result tables.
    pub fn status(&self) -> &'static str {
        match self {
            CoreError::Infeasible { .. } => "infeasible",
            CoreError::SingularInformation { .. } => "singular_information",
            CoreError::NoFeasibleCandidate { .. } => "no_feasible_candidate",
            CoreError::SolverFailure(_) => "solver_failure",
            _ => "error",
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
