use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible action {action} at state {state}")]
    Infeasible { action: String, state: String },

    #[error("support of the system update exceeds the limit of {limit} outcomes")]
    SupportLimit { limit: usize },

    #[error("state enumeration exceeded the limit of {limit} states; reduce item caps or the maximum service age")]
    StateLimit { limit: usize },

    #[error("transition from state {from} leads to state {to} outside the enumerated set")]
    NotClosed { from: String, to: String },

    #[error("relative value iteration did not converge after {iterations} iterations (last span {span:e})")]
    NotConverged { iterations: usize, span: f64 },

    #[error("policy induces {classes} recurrent classes; the instance is not unichain")]
    Multichain { classes: usize },

    #[error("linear system is singular or inconsistent (residual {residual:e})")]
    Singular { residual: f64 },

    #[error("stratum violation: non-passing action at state {state} does not reduce the idle count by one")]
    Stratum { state: usize },

    #[error("policy placed probability {mass:e} on masked action {action}")]
    MaskedMass { action: usize, mass: f64 },

    #[error("empty action mask")]
    EmptyMask,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("atomic step index {step} out of range 1..={max}")]
    StepIndex { step: usize, max: usize },

    #[error("critic fit diverged: {0}")]
    Diverged(String),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SpnError {
    /// Errors caused by an instance or run too large for the configured limits.
    pub fn is_resource_limit(&self) -> bool {
        matches!(self, SpnError::StateLimit { .. } | SpnError::SupportLimit { .. } | SpnError::ResourceLimit(_))
    }
}

pub type Result<T, E = SpnError> = std::result::Result<T, E>;
