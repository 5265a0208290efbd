use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("restriction removes every action at a non-terminal state")]
    EmptyActionSet,
    #[error("state is terminal")]
    TerminalState,
    #[error("action is not legal in the current state: {0}")]
    InvalidAction(String),
    #[error("state is incomplete; reward undefined")]
    IncompleteState,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fragment graph is empty")]
    EmptyGraph,
    #[error("candidates come from different environments")]
    EnvMismatch,
    #[error("every action is masked")]
    AllMasked,
    #[error("non-finite gradient component")]
    NonFiniteGradient,
    #[error("non-positive reward {0}")]
    NonPositiveReward(f64),
    #[error("arm {0} has no observations")]
    ColdArm(usize),
    #[error("super arm size {k} exceeds arm count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("arm reward {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("warmup did not observe arms {0:?}")]
    WarmupStall(Vec<usize>),
    #[error("fewer than two candidates tracked")]
    TooFew,
    #[error("state space too large to enumerate (more than {0} states)")]
    TooLarge(usize),
    #[error("training trajectory violates the active restriction")]
    RestrictionViolated,
    #[error("evaluation sample reached a gradient computation")]
    EvalInGradient,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyActionSet => "EmptyActionSet",
            Error::TerminalState => "TerminalState",
            Error::InvalidAction(_) => "InvalidAction",
            Error::IncompleteState => "IncompleteState",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyGraph => "EmptyGraph",
            Error::EnvMismatch => "EnvMismatch",
            Error::AllMasked => "AllMasked",
            Error::NonFiniteGradient => "NonFiniteGradient",
            Error::NonPositiveReward(_) => "NonPositiveReward",
            Error::ColdArm(_) => "ColdArm",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::OutOfRange(_) => "OutOfRange",
            Error::WarmupStall(_) => "WarmupStall",
            Error::TooFew => "TooFew",
            Error::TooLarge(_) => "TooLarge",
            Error::RestrictionViolated => "RestrictionViolated",
            Error::EvalInGradient => "EvalInGradient",
            Error::Config(_) => "Config",
            Error::Artifact(_) => "Artifact",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
