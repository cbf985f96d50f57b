//! The generation loop: conversation 1 between doctor and patient under
//! moderator supervision, critic feedback, feedback injection, and the
//! post-feedback conversation that becomes the assessed output.

mod conversation;
mod fidelity;
mod run;
mod suite;

pub use conversation::{moderate, parse_verdict, run_conversation, ConversationSite, ModeratorDecision, Opening, Verdict};
pub use fidelity::{validate_patient_fidelity, FidelityValidator, KeywordScreen};
pub use run::{run_dialogue, FirstTurnCache};
pub use suite::generate_suite;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agents::{BackendError, ContextError, PromptContext, PromptError};
use crate::corpus::{ConstitutionId, VignetteId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Doctor,
    Patient,
}

impl Speaker {
    pub fn label(self) -> &'static str {
        match self {
            Self::Doctor => "Doctor",
            Self::Patient => "Patient",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Round {
    PreFeedback,
    PostFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ModeratorStop,
    MaxTurnsCap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub vignette_id: VignetteId,
    pub constitution_id: ConstitutionId,
    pub round: Round,
    pub turns: Vec<Turn>,
    pub termination: Termination,
}

impl Conversation {
    /// Doctor turns sit at even indices, patient turns at odd ones, and
    /// indices run 0, 1, 2, ...
    pub fn is_well_formed(&self) -> bool {
        !self.turns.is_empty()
            && self.turns.iter().enumerate().all(|(i, t)| {
                t.index == i && t.speaker == if i % 2 == 0 { Speaker::Doctor } else { Speaker::Patient }
            })
    }

    pub fn patient_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::Patient)
    }
}

/// Renders turns as `Speaker: text` paragraphs.
pub fn render_transcript(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| format!("{}: {}", t.speaker.label(), t.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    Valid,
    PatientViolation,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRun {
    pub run_id: String,
    pub vignette_id: VignetteId,
    pub constitution_id: ConstitutionId,
    pub conversation_1: Conversation,
    /// Feedback of the last critic round.
    pub critic_feedback: String,
    /// The assessed conversation: the one after the last critic round.
    pub conversation_2: Conversation,
    pub validation: Validation,
    pub regeneration_count: u32,
    /// Feedback from every critic round, in order.
    pub feedback_history: Vec<String>,
    /// Conversations between the first and the last when more than one
    /// critic round runs.
    pub intermediate_conversations: Vec<Conversation>,
    /// The doctor's full context at the end of the run.
    pub doctor_context: PromptContext,
    pub validation_notes: Vec<String>,
}

impl DialogueRun {
    pub fn conversations(&self) -> impl Iterator<Item = &Conversation> {
        std::iter::once(&self.conversation_1)
            .chain(self.intermediate_conversations.iter())
            .chain(std::iter::once(&self.conversation_2))
    }
}

pub fn run_id(vignette: &str, constitution: &str) -> String {
    format!("{vignette}__{constitution}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub critic_rounds: u32,
    pub max_turns_per_conversation: usize,
    pub max_regenerations: u32,
    pub reuse_first_patient_turn: bool,
    /// Upper bound on cells generated concurrently.
    pub parallelism: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            critic_rounds: 1,
            max_turns_per_conversation: 20,
            max_regenerations: 3,
            reuse_first_patient_turn: true,
            parallelism: 1,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.critic_rounds == 0 {
            return Err(EngineError::Config("critic_rounds must be >= 1".into()));
        }
        if self.max_turns_per_conversation == 0 {
            return Err(EngineError::Config("max_turns_per_conversation must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(EngineError::Config("parallelism must be >= 1".into()));
        }
        Ok(())
    }
}

/// Step of a dialogue run, used to label failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// 1-based conversation number within the run.
    Conversation(u32),
    /// 1-based critic round.
    Critic(u32),
    FeedbackInjection(u32),
    Prompt,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Conversation(n) => write!(f, "conversation {n}"),
            Self::Critic(n) => write!(f, "critic round {n}"),
            Self::FeedbackInjection(n) => write!(f, "feedback injection {n}"),
            Self::Prompt => f.write_str("prompt rendering"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error("{stage}: backend failure after {} turns: {source}", partial.len())]
    Backend {
        stage: Stage,
        source: BackendError,
        /// Turns completed before the failure.
        partial: Vec<Turn>,
    },
    #[error("{stage}: {source}")]
    Context { stage: Stage, source: ContextError },
    #[error("{stage}: {source}")]
    Prompt { stage: Stage, source: PromptError },
    #[error("moderator was given an empty transcript")]
    EmptyTranscript,
    #[error("corpus has no {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },
    #[error("cell {vignette}/{constitution}: no valid run after {attempts} attempts ({reason})")]
    RegenerationBudget { vignette: String, constitution: String, attempts: u32, reason: String },
    #[error("{vignette}/{constitution}: {source}")]
    Cell { vignette: String, constitution: String, source: Box<EngineError> },
}

impl EngineError {
    fn in_stage(self, stage: Stage) -> Self {
        match self {
            Self::Backend { source, partial, .. } => Self::Backend { stage, source, partial },
            Self::Context { source, .. } => Self::Context { stage, source },
            other => other,
        }
    }

    /// Partial transcript carried by a mid-conversation backend failure.
    pub fn partial_transcript(&self) -> Option<&[Turn]> {
        match self {
            Self::Backend { partial, .. } => Some(partial),
            Self::Cell { source, .. } => source.partial_transcript(),
            _ => None,
        }
    }
}
