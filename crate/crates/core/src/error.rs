use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("feature {index} is not finite")]
    NonFiniteFeature { index: usize },
    #[error("reward {0} is outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("action {action} is outside 1..={k}")]
    ActionOutOfRange { action: usize, k: usize },
    #[error("propensity of action {action} is {value}; it must be positive")]
    NonPositivePropensity { action: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("weight {0} must be finite and non-negative")]
    InvalidWeight(f64),
    #[error("weight cap {cap} is below observed weight {weight}")]
    WeightAboveCap { cap: f64, weight: f64 },
    #[error("at least two actions are required, got {0}")]
    TooFewActions(usize),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
}
