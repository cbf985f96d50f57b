//! The four dialogue agents: prompt rendering, per-agent conversation
//! context, and generation against a pluggable text backend.

mod backend;
mod context;
mod live;
mod prompts;
mod scripted;

pub use backend::{
    build_backend, generate, BackendConfig, BackendError, BackendMode, CallSite, Completion, GenerationRecord,
    TextBackend,
};
pub use context::{inject_feedback, Author, ContextError, Message, PromptContext};
pub use live::{HttpReply, LiveAdapter, LiveBackend, ReqwestTransport, Transport, TransportError};
pub use prompts::{
    render_system_prompt, PromptError, ACKNOWLEDGEMENT, CONVERSATION_START, DOCTOR_OPENER, DOCTOR_PROMPT,
    FEEDBACK_PREFIX, FEEDBACK_SUFFIX, MODERATOR_PROMPT, NEXT_ROUND,
};
pub use scripted::{ScriptError, ScriptedBackend};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Patient,
    Doctor,
    Moderator,
    Critic,
}

impl AgentRole {
    pub const ALL: [AgentRole; 4] = [Self::Patient, Self::Doctor, Self::Moderator, Self::Critic];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Patient => "patient",
            Self::Doctor => "doctor",
            Self::Moderator => "moderator",
            Self::Critic => "critic",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown agent role `{s}`"))
    }
}
