use thiserror::Error;

/// Failures surfaced by the laboratory's operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("arm index {arm} out of range for a {arms}-arm bandit")]
    ArmOutOfRange { arm: usize, arms: usize },

    #[error("state {state} out of range ({states} states)")]
    StateOutOfRange { state: usize, states: usize },

    #[error("action {action} out of range ({actions} actions)")]
    ActionOutOfRange { action: usize, actions: usize },

    #[error("cannot step from terminal cell {0}")]
    TerminalState(usize),

    #[error("policy has {policy_states} states x {policy_actions} actions but environment needs {env_states} x {env_actions}")]
    DimensionMismatch {
        policy_states: usize,
        policy_actions: usize,
        env_states: usize,
        env_actions: usize,
    },

    #[error("non-finite logit at index {0}")]
    NonFiniteLogits(usize),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("action {action} has probability {prob:e}: policy is numerically committed")]
    NumericallyCommitted { action: usize, prob: f64 },

    #[error("behaviour probability {prob:e} of action {action} is below the 1e-12 floor")]
    BehaviourTooSmall { action: usize, prob: f64 },

    #[error("update produced a non-finite parameter at index {0}")]
    Diverged(usize),

    #[error("degenerate policy: baseline weights sum to zero")]
    DegeneratePolicy,

    #[error("gap baseline needs distinct top-two mean rewards (got {best} and {second})")]
    TiedRewards { best: f64, second: f64 },

    #[error("gap baseline {value} is not strictly between {second} and {best}")]
    GapOutOfRange { value: f64, best: f64, second: f64 },

    #[error("probability {0} is outside the open interval (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("bound not applicable: {0}")]
    BoundNotApplicable(String),

    #[error("epsilon = -1 is an unresolved boundary case")]
    UnresolvedRegime,

    #[error("unbounded increments: {0}")]
    UnboundedIncrements(String),

    #[error("incompatible configuration: {0}")]
    Incompatible(String),

    #[error("invalid configuration field `{field}`: {message}")]
    InvalidField { field: String, message: String },

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("unknown figure `{id}`; valid ids: {valid}")]
    UnknownFigure { id: String, valid: String },

    #[error("empty run record")]
    EmptyRun,

    #[error("policy on simplex boundary: component {0} is zero")]
    OnBoundary(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn field(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidField {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
