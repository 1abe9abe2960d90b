use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("transition row ({state}, {action}) sums to {sum}, expected 1")]
    RowSum { state: usize, action: usize, sum: f64 },

    #[error("transition ({state}, {action}) -> {next} has probability {value} outside [0, 1]")]
    ProbabilityOutOfRange {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },

    #[error("reward ({state}, {action}) = {value} is outside [0, 1]")]
    RewardOutOfRange { state: usize, action: usize, value: f64 },

    #[error("state and action spaces must be nonempty")]
    EmptySpace,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("state index {state} out of range for {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },

    #[error("action index {action} out of range for {num_actions} actions")]
    ActionOutOfRange { action: usize, num_actions: usize },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("policy row for state {state} is not a probability vector")]
    InvalidPolicy { state: usize },

    #[error("behavior policy is not fully supported: pi_b({action} | {state}) = 0")]
    BehaviorNotFullySupported { state: usize, action: usize },

    #[error("reference state {state} is not reachable under every deterministic policy")]
    Unreachable { state: usize },

    #[error("hitting-time iteration exceeded ceiling {ceiling}; reachability is violated")]
    HittingTimeDivergence { ceiling: f64 },

    #[error("linear system is singular: {0}")]
    Singular(&'static str),

    #[error("iteration cap of {cap} reached without convergence (residual {residual})")]
    IterationCap { cap: usize, residual: f64 },

    #[error("chain has {classes} closed communicating classes, expected exactly one")]
    Multichain { classes: usize },

    #[error("seminorm evaluation exceeded the budget of {budget} policy-sequence vectors")]
    BudgetExceeded { budget: usize },

    #[error("empty input")]
    Empty,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dims(states: usize, actions: usize) -> String {
    format!("{states}x{actions}")
}
