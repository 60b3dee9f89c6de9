use thiserror::Error;

use crate::env::{ActionId, StateId};

/// Errors produced by environments, planners and the experiment harness.
#[derive(Debug, Error)]
pub enum HorizonError {
    #[error("action {action} is not available at state {state}")]
    InvalidAction { state: StateId, action: ActionId },
    #[error("state {0} is terminal; no action can be chosen")]
    TerminalState(StateId),
    #[error("state {0} is outside the environment")]
    UnknownState(StateId),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("malformed environment: {0}")]
    InvalidEnvironment(String),
    #[error("instance spec cannot be embedded: {0}")]
    InfeasibleSpec(String),
    #[error("node {0} has not been expanded")]
    UnexpandedNode(StateId),
    #[error("proposer returned no actions at state {0}")]
    ProposerEmpty(StateId),
    #[error("remote service error: {0}")]
    Remote(String),
    #[error("no records to summarize")]
    EmptyInput,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = HorizonError> = std::result::Result<T, E>;
