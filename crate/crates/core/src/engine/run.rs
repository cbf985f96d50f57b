use std::collections::BTreeMap;

use super::conversation::{run_conversation, ConversationSite, Opening};
use super::{render_transcript, run_id, Conversation, DialogueRun, EngineConfig, EngineError, Round, Stage, Validation};
use crate::agents::{
    generate, inject_feedback, render_system_prompt, AgentRole, CallSite, PromptContext, TextBackend,
    CONVERSATION_START, DOCTOR_OPENER,
};
use crate::corpus::{Constitution, Vignette, VignetteId};

/// The patient's first reply per vignette, shared by every conversation of
/// that vignette when reuse is enabled.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FirstTurnCache {
    entries: BTreeMap<VignetteId, String>,
}

impl FirstTurnCache {
    pub fn get(&self, vignette: &VignetteId) -> Option<&str> {
        self.entries.get(vignette).map(String::as_str)
    }

    pub fn insert(&mut self, vignette: VignetteId, text: String) {
        self.entries.insert(vignette, text);
    }

    pub fn contains(&self, vignette: &VignetteId) -> bool {
        self.entries.contains_key(vignette)
    }
}

fn prompt(role: AgentRole, vignette: Option<&Vignette>, constitution: Option<&Constitution>) -> Result<String, EngineError> {
    render_system_prompt(role, vignette, constitution).map_err(|source| EngineError::Prompt { stage: Stage::Prompt, source })
}

/// Generates one dialogue run: a first conversation, then `critic_rounds`
/// rounds of critic feedback each followed by a new conversation. The last
/// conversation is the assessed output.
///
/// With `cfg.reuse_first_patient_turn`, the patient's first reply comes from
/// `cache` when present; otherwise it is generated in the first conversation
/// and stored.
pub fn run_dialogue(
    vignette: &Vignette,
    constitution: &Constitution,
    backend: &dyn TextBackend,
    cfg: &EngineConfig,
    cache: &mut FirstTurnCache,
    attempt: u32,
) -> Result<DialogueRun, EngineError> {
    cfg.validate()?;
    let patient_prompt = prompt(AgentRole::Patient, Some(vignette), None)?;
    let moderator_ctx = PromptContext::new(prompt(AgentRole::Moderator, None, None)?);
    let critic_prompt = prompt(AgentRole::Critic, None, Some(constitution))?;

    let mut doctor_ctx = PromptContext::new(prompt(AgentRole::Doctor, None, None)?);
    doctor_ctx.push_user(CONVERSATION_START);

    let cached = if cfg.reuse_first_patient_turn { cache.get(&vignette.id).map(str::to_owned) } else { None };
    let mut site = ConversationSite {
        vignette_id: vignette.id.clone(),
        constitution_id: constitution.id.clone(),
        round: Round::PreFeedback,
        attempt,
        turn_offset: 0,
        opening: Opening::Generate,
        first_patient_turn: cached,
    };

    let mut patient_ctx = PromptContext::new(patient_prompt.clone());
    let first = run_conversation(&mut doctor_ctx, &mut patient_ctx, &moderator_ctx, backend, cfg, &site)
        .map_err(|e| e.in_stage(Stage::Conversation(1)))?;
    if cfg.reuse_first_patient_turn && site.first_patient_turn.is_none() {
        if let Some(reply) = first.turns.get(1) {
            cache.insert(vignette.id.clone(), reply.text.clone());
            site.first_patient_turn = Some(reply.text.clone());
        }
    }

    let mut turns_so_far = first.turns.len();
    let mut conversations: Vec<Conversation> = vec![first];
    let mut feedback_history = Vec::new();

    for round in 1..=cfg.critic_rounds {
        let latest = conversations.last().expect("at least one conversation");
        let mut critic_ctx = PromptContext::new(critic_prompt.clone());
        critic_ctx.push_user(render_transcript(&latest.turns));
        let call = CallSite {
            role: AgentRole::Critic,
            turn_index: turns_so_far,
            vignette: vignette.id.as_str(),
            constitution: constitution.id.as_str(),
            attempt,
        };
        let (feedback, _) = generate(backend, &call, &critic_ctx).map_err(|source| EngineError::Backend {
            stage: Stage::Critic(round),
            source,
            partial: latest.turns.clone(),
        })?;

        doctor_ctx = inject_feedback(doctor_ctx, &feedback)
            .map_err(|source| EngineError::Context { stage: Stage::FeedbackInjection(round), source })?;
        feedback_history.push(feedback);

        site.round = Round::PostFeedback;
        site.turn_offset = turns_so_far;
        site.opening = Opening::Forced(DOCTOR_OPENER.to_owned());
        let mut patient_ctx = PromptContext::new(patient_prompt.clone());
        let conversation = run_conversation(&mut doctor_ctx, &mut patient_ctx, &moderator_ctx, backend, cfg, &site)
            .map_err(|e| e.in_stage(Stage::Conversation(round + 1)))?;
        turns_so_far += conversation.turns.len();
        conversations.push(conversation);
    }

    let conversation_2 = conversations.pop().expect("critic_rounds >= 1");
    let mut rest = conversations.into_iter();
    let conversation_1 = rest.next().expect("first conversation");
    Ok(DialogueRun {
        run_id: run_id(vignette.id.as_str(), constitution.id.as_str()),
        vignette_id: vignette.id.clone(),
        constitution_id: constitution.id.clone(),
        conversation_1,
        critic_feedback: feedback_history.last().cloned().unwrap_or_default(),
        conversation_2,
        validation: Validation::Pending,
        regeneration_count: 0,
        feedback_history,
        intermediate_conversations: rest.collect(),
        doctor_context: doctor_ctx,
        validation_notes: Vec::new(),
    })
}
