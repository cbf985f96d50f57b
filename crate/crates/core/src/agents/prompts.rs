use crate::corpus::{Constitution, Vignette, CRITIC_FRAME_PREFIX};

use super::AgentRole;

pub const DOCTOR_PROMPT: &str = "You are a Doctor speaking to a patient over an online chat interface. \
You know nothing about the patient in advance. Respond in single-turn responses to understand their symptoms \
and find a diagnosis. You should provide a diagnosis to the patient. You are the healthcare provider. \
Do not tell the patient to see a healthcare provider. Do not reveal you are an AI bot. \
Give your responses in 50 words or less.";

pub const MODERATOR_PROMPT: &str = "You are a helpful AI agent which is monitoring a simulated conversation \
between a Doctor and a Patient. You should stop the conversation when you feel a natural conclusion has been \
reached. Do not terminate the conversation if there are any open questions left unanswered.";

const PATIENT_PREAMBLE: &str = "You are a patient chatting with a doctor over an online chat interface. \
The doctor has never met you before. This is your profile:";

const PATIENT_CLOSING: &str = "Using the profile you should answer as the patient. \
Do not reveal you are an AI chatbot. Give your responses in 60 words or less.";

/// Forced exchange appended to the doctor's context after critic feedback.
pub const FEEDBACK_PREFIX: &str = "Here is feedback on your previous interaction with the patient: ";
pub const FEEDBACK_SUFFIX: &str = " Incorporate this feedback into your responses in the next turn of conversation";
pub const ACKNOWLEDGEMENT: &str =
    "I understand and have acknowledged the feedback. I will incorporate it into the next turn of the conversation.";
pub const NEXT_ROUND: &str = "The next round of conversation is about to start.";
pub const DOCTOR_OPENER: &str = "Hello, how can I help you today?";

/// User turn that starts the doctor's first conversation, so the context
/// opens with a user message like every later round.
pub const CONVERSATION_START: &str = "The conversation is about to start.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("{role} prompt requires a {what}")]
    Missing { role: AgentRole, what: &'static str },
    #[error("{role} prompt does not take a {what}")]
    Unexpected { role: AgentRole, what: &'static str },
}

/// Renders the system prompt for `role`.
///
/// The patient prompt needs a vignette and the critic prompt a constitution;
/// no other role accepts either.
pub fn render_system_prompt(
    role: AgentRole,
    vignette: Option<&Vignette>,
    constitution: Option<&Constitution>,
) -> Result<String, PromptError> {
    match (role, vignette.is_some(), constitution.is_some()) {
        (AgentRole::Patient, false, _) => return Err(PromptError::Missing { role, what: "vignette" }),
        (AgentRole::Critic, _, false) => return Err(PromptError::Missing { role, what: "constitution" }),
        (AgentRole::Patient, _, true) | (AgentRole::Doctor | AgentRole::Moderator, _, true) => {
            return Err(PromptError::Unexpected { role, what: "constitution" })
        }
        (AgentRole::Critic | AgentRole::Doctor | AgentRole::Moderator, true, _) => {
            return Err(PromptError::Unexpected { role, what: "vignette" })
        }
        _ => {}
    }

    Ok(match role {
        AgentRole::Doctor => DOCTOR_PROMPT.to_owned(),
        AgentRole::Moderator => MODERATOR_PROMPT.to_owned(),
        AgentRole::Patient => {
            let vignette = vignette.expect("checked above");
            format!("{PATIENT_PREAMBLE}\n\n{}\n\n{PATIENT_CLOSING}", vignette.profile_text())
        }
        AgentRole::Critic => {
            let c = constitution.expect("checked above");
            format!("{CRITIC_FRAME_PREFIX}{}{}", c.critic_slot(), c.limit_sentence())
        }
    })
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::corpus::{load_corpus, ConstitutionId, Corpus};

    fn corpus() -> Corpus {
        load_corpus(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")).unwrap()
    }

    #[test]
    fn doctor_prompt_has_word_limit() {
        let p = render_system_prompt(AgentRole::Doctor, None, None).unwrap();
        assert!(p.contains("Give your responses in 50 words or less."));
        assert!(p.contains("Do not reveal you are an AI bot."));
    }

    #[test]
    fn patient_prompt_embeds_profile() {
        let corpus = corpus();
        let v = corpus.vignette("vignette_1").unwrap();
        let p = render_system_prompt(AgentRole::Patient, Some(v), None).unwrap();
        assert!(p.contains("Give your responses in 60 words or less."));
        assert!(p.contains(&v.overview));
        assert!(p.contains("Primary Symptoms: Hypopigmented skin patches"));
        assert!(p.starts_with("You are a patient chatting with a doctor"));
    }

    #[test]
    fn critic_prompt_without_constitution_content() {
        let corpus = corpus();
        let none = corpus.constitution(ConstitutionId::NONE).unwrap();
        let p = render_system_prompt(AgentRole::Critic, None, Some(none)).unwrap();
        assert_eq!(p, "You are an AI critic providing feedback. Give feedback as you see fit. Give your feedback in 100 words or less.");
        assert!(!p.contains("doctor") && !p.contains("patient"));
    }

    #[test]
    fn critic_prompt_reproduces_each_constitution() {
        for c in &corpus().constitutions {
            let p = render_system_prompt(AgentRole::Critic, None, Some(c)).unwrap();
            assert_eq!(p, c.critic_guideline_text);
        }
    }

    #[test]
    fn custom_constitution_is_framed() {
        let c = Constitution::new(ConstitutionId::new("terse"), "Terse", "Focus on brevity.");
        let p = render_system_prompt(AgentRole::Critic, None, Some(&c)).unwrap();
        assert_eq!(p, "You are an AI critic providing feedback Focus on brevity. Give your feedback in 100 words or less.");
    }

    #[test]
    fn argument_checks() {
        let corpus = corpus();
        let v = &corpus.vignettes[0];
        let c = &corpus.constitutions[0];
        assert_eq!(
            render_system_prompt(AgentRole::Patient, None, None),
            Err(PromptError::Missing { role: AgentRole::Patient, what: "vignette" })
        );
        assert_eq!(
            render_system_prompt(AgentRole::Critic, None, None),
            Err(PromptError::Missing { role: AgentRole::Critic, what: "constitution" })
        );
        assert!(render_system_prompt(AgentRole::Doctor, Some(v), None).is_err());
        assert!(render_system_prompt(AgentRole::Moderator, None, Some(c)).is_err());
    }

    #[test]
    fn rendering_is_pure() {
        let corpus = corpus();
        let v = &corpus.vignettes[1];
        let a = render_system_prompt(AgentRole::Patient, Some(v), None).unwrap();
        let b = render_system_prompt(AgentRole::Patient, Some(v), None).unwrap();
        assert_eq!(a.as_bytes(), b.as_bytes());
    }
}
