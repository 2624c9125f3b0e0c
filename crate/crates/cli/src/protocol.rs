//! Wire messages of the `/play` websocket. Every frame is a JSON object
//! tagged by `type`.

use ha2_core::kitchen::{Action, GameState, InteractEvent};
use ha2_core::subtasks::SubTask;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    /// Start a round, or attach to a live one when `session` is set.
    Join {
        #[serde(default)]
        layout: Option<String>,
        #[serde(default)]
        agent: Option<String>,
        #[serde(default)]
        session: Option<String>,
    },
    Input {
        action: Action,
    },
    Ping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    SessionStart {
        session: String,
        layout: String,
        /// Rows of the static grid, one string per row.
        grid: Vec<String>,
        agent: String,
        seat: usize,
        tick_ms: u64,
        ticks: u32,
    },
    StateUpdate {
        tick: u32,
        state: GameState,
        score: u32,
        last_events: [Option<InteractEvent>; 2],
        /// The sub-task the agent is pursuing, when it has a manager.
        agent_sub_task: Option<SubTask>,
    },
    RoundEnd {
        score: u32,
        ticks: u32,
        replay: String,
    },
    Error {
        code: String,
        message: String,
    },
    Pong,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("SessionLimitExceeded: {0} live sessions")]
    SessionLimitExceeded(usize),
    #[error("CheckpointLoadFailure: {0}")]
    CheckpointLoadFailure(String),
    #[error("ProtocolViolation: {0}")]
    ProtocolViolation(String),
    #[error("UnknownSession: {0}")]
    UnknownSession(String),
    #[error("UnknownLayout: {0}")]
    UnknownLayout(String),
    #[error("UnknownAgent: {0}")]
    UnknownAgent(String),
    #[error("AgentFailure: {0}")]
    AgentFailure(String),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::SessionLimitExceeded(_) => "SessionLimitExceeded",
            SessionError::CheckpointLoadFailure(_) => "CheckpointLoadFailure",
            SessionError::ProtocolViolation(_) => "ProtocolViolation",
            SessionError::UnknownSession(_) => "UnknownSession",
            SessionError::UnknownLayout(_) => "UnknownLayout",
            SessionError::UnknownAgent(_) => "UnknownAgent",
            SessionError::AgentFailure(_) => "AgentFailure",
        }
    }

    pub fn to_msg(&self) -> ServerMsg {
        ServerMsg::Error {
            code: self.code().to_string(),
            message: self.to_string(),
        }
    }
}
