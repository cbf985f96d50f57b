use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompts::{ACKNOWLEDGEMENT, DOCTOR_OPENER, FEEDBACK_PREFIX, FEEDBACK_SUFFIX, NEXT_ROUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub author: Author,
    pub text: String,
}

/// System prompt plus the message history one agent sees.
///
/// Messages must alternate authors starting from [`Author::User`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PromptContext {
    pub system_prompt: String,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContextError {
    #[error("context must start with a user message")]
    StartsWithAssistant,
    #[error("message {0} is followed by a message from the same author")]
    NotAlternating(usize),
    #[error("context has no messages")]
    Empty,
    #[error("expected the last message to be from the {expected:?}")]
    WrongLastAuthor { expected: Author },
}

impl PromptContext {
    pub fn new(system_prompt: impl Into<String>) -> Self {
        Self { system_prompt: system_prompt.into(), messages: Vec::new() }
    }

    pub fn push(&mut self, author: Author, text: impl Into<String>) {
        self.messages.push(Message { author, text: text.into() });
    }

    pub fn push_user(&mut self, text: impl Into<String>) {
        self.push(Author::User, text);
    }

    pub fn push_assistant(&mut self, text: impl Into<String>) {
        self.push(Author::Assistant, text);
    }

    pub fn last_author(&self) -> Option<Author> {
        self.messages.last().map(|m| m.author)
    }

    pub fn check_alternation(&self) -> Result<(), ContextError> {
        if let Some(first) = self.messages.first() {
            if first.author != Author::User {
                return Err(ContextError::StartsWithAssistant);
            }
        }
        match self.messages.windows(2).position(|w| w[0].author == w[1].author) {
            Some(i) => Err(ContextError::NotAlternating(i)),
            None => Ok(()),
        }
    }

    /// Checks the context is ready for the next assistant reply: alternating
    /// and ending with a user message.
    pub fn check_ready(&self) -> Result<(), ContextError> {
        self.check_alternation()?;
        match self.last_author() {
            None => Err(ContextError::Empty),
            Some(Author::User) => Ok(()),
            Some(Author::Assistant) => Err(ContextError::WrongLastAuthor { expected: Author::User }),
        }
    }

    /// Hex SHA-256 of the canonical JSON rendering.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("context serialises");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Appends the forced four-message feedback exchange to a doctor context
/// that ends with the doctor's last reply.
pub fn inject_feedback(mut doctor_ctx: PromptContext, feedback: &str) -> Result<PromptContext, ContextError> {
    doctor_ctx.check_alternation()?;
    if doctor_ctx.last_author() != Some(Author::Assistant) {
        return Err(ContextError::WrongLastAuthor { expected: Author::Assistant });
    }
    if feedback.trim().is_empty() {
        tracing::warn!("injecting empty critic feedback");
    }
    doctor_ctx.push_user(format!("{FEEDBACK_PREFIX}{feedback}{FEEDBACK_SUFFIX}"));
    doctor_ctx.push_assistant(ACKNOWLEDGEMENT);
    doctor_ctx.push_user(NEXT_ROUND);
    doctor_ctx.push_assistant(DOCTOR_OPENER);
    Ok(doctor_ctx)
}
