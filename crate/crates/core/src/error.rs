use alloc::string::String;

use thiserror::Error;

/// Problems with the raw log data or its labels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("no events")]
    NoEvents,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("respondent {respondent}: event times must be strictly increasing ({message})")]
    NonMonotone { respondent: String, message: String },
    #[error("respondent {respondent}: two events share time {time}")]
    DuplicateTime { respondent: String, time: f64 },
    #[error("respondent {respondent}: total time {total} precedes last event at {last}")]
    TotalTimeTooShort { respondent: String, total: f64, last: f64 },
    #[error("respondent {respondent}: invalid time {time}")]
    InvalidTime { respondent: String, time: f64 },
    #[error("action catalog needs at least 2 distinct actions, found {0}")]
    TooFewActions(usize),
    #[error("empty action identifier")]
    EmptyAction,
    #[error("duplicate respondent id {0}")]
    DuplicateRespondent(String),
    #[error("no respondents remain after matching covariates and labels")]
    NoRespondents,
    #[error("respondent {respondent}: expected {expected} covariates, got {got}")]
    CovariateLength {
        respondent: String,
        expected: usize,
        got: usize,
    },
    #[error("respondent {0} has no correctness label")]
    MissingLabel(String),
    #[error("outcome group {0} is empty; both correct and incorrect respondents are required")]
    EmptyGroup(u8),
}

/// Problems when binding parameters and data to the hazard model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("self-transition {0} -> {0} is not part of the model")]
    SelfTransition(usize),
    #[error("parameter dimension mismatch: {0}")]
    Dimension(String),
    #[error("parameter {0} must be strictly positive")]
    NonPositive(String),
    #[error("non-finite log-likelihood contribution from respondent {respondent}")]
    NonFinite { respondent: usize },
    #[error("key action state {0} is outside the catalog")]
    UnknownKeyState(usize),
    #[error("at least one key action is required")]
    NoKeyActions,
    #[error("respondent index {0} out of range")]
    UnknownRespondent(usize),
}

/// Key-action selection failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KeyActionError {
    #[error(
        "only {found} action(s) pass the group-ratio filter; at least {needed} are needed \
         (choose the key actions manually with an explicit K)"
    )]
    TooFewCandidates { found: usize, needed: usize },
    #[error("override K must be at least 1")]
    ZeroK,
    #[error("both outcome groups need at least one respondent")]
    EmptyGroup,
    #[error("label vector has {got} entries for {expected} respondents")]
    LabelLength { expected: usize, got: usize },
}

/// Sampler configuration and runtime failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("log-likelihood is not finite at the initial state; try a different init")]
    NonFiniteInit,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosteriorError {
    #[error("HPD interval needs at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("probability mass must lie in (0, 1), got {0}")]
    Mass(f64),
    #[error("chain has no retained draws")]
    EmptyChain,
    #[error("chains have incompatible layouts")]
    IncompatibleChains,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid design: {0}")]
    Design(String),
    #[error("exact simulation requires beta3 = 0 (key action {0} has a non-zero onset-time effect)")]
    NonZeroBeta3(usize),
}

/// Umbrella error for callers that drive the whole pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    KeyAction(#[from] KeyActionError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
