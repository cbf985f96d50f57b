use std::sync::LazyLock;

use regex::Regex;

use super::{render_transcript, Conversation, EngineConfig, EngineError, Round, Speaker, Stage, Termination, Turn};
use crate::agents::{generate, AgentRole, CallSite, PromptContext, TextBackend};
use crate::corpus::{ConstitutionId, VignetteId};

const MODERATOR_PROTOCOL: &str = "Reply with the single word CONTINUE if the conversation should go on, \
or STOP if it has reached a natural conclusion.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeratorDecision {
    pub verdict: Verdict,
    pub raw: String,
    /// The reply had no verdict token and `Continue` was assumed.
    pub defaulted: bool,
}

static VERDICT_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(continue|stop)\b").unwrap());

/// First CONTINUE/STOP token in `text`, case-insensitive.
pub fn parse_verdict(text: &str) -> Option<Verdict> {
    VERDICT_TOKEN.find(text).map(|m| {
        if m.as_str().eq_ignore_ascii_case("stop") {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    })
}

/// Asks the moderator whether the conversation has concluded. The full
/// transcript is re-rendered for every consultation.
pub fn moderate(
    moderator_ctx: &PromptContext,
    transcript: &[Turn],
    backend: &dyn TextBackend,
    call: &CallSite<'_>,
) -> Result<ModeratorDecision, EngineError> {
    if transcript.is_empty() {
        return Err(EngineError::EmptyTranscript);
    }
    let mut ctx = moderator_ctx.clone();
    ctx.push_user(format!(
        "Here is the conversation so far:\n\n{}\n\n{MODERATOR_PROTOCOL}",
        render_transcript(transcript)
    ));
    let (raw, _) = generate(backend, call, &ctx).map_err(|source| EngineError::Backend {
        stage: Stage::Prompt,
        source,
        partial: transcript.to_vec(),
    })?;
    Ok(match parse_verdict(&raw) {
        Some(verdict) => ModeratorDecision { verdict, raw, defaulted: false },
        None => {
            tracing::warn!(reply = %raw, "moderator reply has no CONTINUE/STOP token; continuing");
            ModeratorDecision { verdict: Verdict::Continue, raw, defaulted: true }
        }
    })
}

/// How the doctor's first turn of a conversation is produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Opening {
    /// Generated from a doctor context ending in a user message.
    Generate,
    /// Already present as the last assistant message of the doctor context.
    Forced(String),
}

/// Identity and position of one conversation within a run.
#[derive(Debug, Clone)]
pub struct ConversationSite {
    pub vignette_id: VignetteId,
    pub constitution_id: ConstitutionId,
    pub round: Round,
    pub attempt: u32,
    /// Dialogue turns recorded earlier in the same run.
    pub turn_offset: usize,
    pub opening: Opening,
    /// Patient's first reply, when it is reused rather than generated.
    pub first_patient_turn: Option<String>,
}

/// Runs one doctor/patient conversation.
///
/// Patient replies reach the doctor context only when the doctor answers
/// them, and vice versa, so both contexts end with their own agent's last
/// message when the conversation stops.
pub fn run_conversation(
    doctor_ctx: &mut PromptContext,
    patient_ctx: &mut PromptContext,
    moderator_ctx: &PromptContext,
    backend: &dyn TextBackend,
    cfg: &EngineConfig,
    site: &ConversationSite,
) -> Result<Conversation, EngineError> {
    let cap = cfg.max_turns_per_conversation;
    let mut turns: Vec<Turn> = Vec::new();
    let call = |role, turns_so_far: usize| CallSite {
        role,
        turn_index: site.turn_offset + turns_so_far,
        vignette: site.vignette_id.as_str(),
        constitution: site.constitution_id.as_str(),
        attempt: site.attempt,
    };
    let fail = |source, turns: &[Turn]| EngineError::Backend { stage: Stage::Prompt, source, partial: turns.to_vec() };
    let context_fail = |source| EngineError::Context { stage: Stage::Prompt, source };

    let termination = loop {
        let doctor_text = match (&site.opening, turns.last()) {
            (Opening::Forced(opener), None) => opener.clone(),
            (_, last) => {
                if let Some(patient) = last {
                    doctor_ctx.push_user(patient.text.clone());
                }
                let (text, _) =
                    generate(backend, &call(AgentRole::Doctor, turns.len()), doctor_ctx).map_err(|e| fail(e, &turns))?;
                doctor_ctx.push_assistant(text.clone());
                text
            }
        };
        turns.push(Turn { speaker: Speaker::Doctor, text: doctor_text.clone(), index: turns.len() });
        if turns.len() >= cap {
            break Termination::MaxTurnsCap;
        }

        patient_ctx.push_user(doctor_text);
        let patient_text = match (&site.first_patient_turn, turns.len()) {
            (Some(cached), 1) => {
                patient_ctx.check_ready().map_err(context_fail)?;
                cached.clone()
            }
            _ => generate(backend, &call(AgentRole::Patient, turns.len()), patient_ctx)
                .map_err(|e| fail(e, &turns))?
                .0,
        };
        patient_ctx.push_assistant(patient_text.clone());
        turns.push(Turn { speaker: Speaker::Patient, text: patient_text, index: turns.len() });

        let decision = moderate(moderator_ctx, &turns, backend, &call(AgentRole::Moderator, turns.len()))?;
        if decision.verdict == Verdict::Stop {
            break Termination::ModeratorStop;
        }
        if turns.len() >= cap {
            break Termination::MaxTurnsCap;
        }
    };

    Ok(Conversation {
        vignette_id: site.vignette_id.clone(),
        constitution_id: site.constitution_id.clone(),
        round: site.round,
        turns,
        termination,
    })
}
