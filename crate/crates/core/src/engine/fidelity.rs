//! Screens for patient agents that stray from their vignette.

use std::sync::LazyLock;

use regex::Regex;

use super::{DialogueRun, Validation};
use crate::corpus::Vignette;

/// Decides whether a run's patient stayed faithful to the vignette.
///
/// `Ok` carries the violations found (empty means valid); `Err` means the
/// check itself could not be carried out.
pub trait FidelityValidator: Send + Sync {
    fn check(&self, run: &DialogueRun, vignette: &Vignette) -> Result<Vec<String>, String>;
}

impl<F> FidelityValidator for F
where
    F: Fn(&DialogueRun, &Vignette) -> Result<Vec<String>, String> + Send + Sync,
{
    fn check(&self, run: &DialogueRun, vignette: &Vignette) -> Result<Vec<String>, String> {
        self(run, vignette)
    }
}

/// Applies `validator` and records the outcome on the run.
pub fn validate_patient_fidelity(
    run: &mut DialogueRun,
    vignette: &Vignette,
    validator: &dyn FidelityValidator,
) -> Validation {
    debug_assert_eq!(run.validation, Validation::Pending, "run {} validated twice", run.run_id);
    let (status, notes) = match validator.check(run, vignette) {
        Ok(v) if v.is_empty() => (Validation::Valid, v),
        Ok(v) => (Validation::PatientViolation, v),
        Err(reason) => (Validation::PatientViolation, vec![format!("validator failed: {reason}")]),
    };
    run.validation = status;
    run.validation_notes = notes;
    status
}

/// Symptom concepts and the phrasings that express them.
const SYMPTOM_LEXICON: &[(&str, &[&str])] = &[
    ("chest pain", &["chest pain", "chest pains", "chest tightness"]),
    ("headache", &["headache", "headaches", "migraine", "migraines"]),
    ("fever", &["fever", "fevers", "feverish", "high temperature"]),
    ("cough", &["cough", "coughing"]),
    ("nausea", &["nausea", "nauseous", "nauseated"]),
    ("vomiting", &["vomiting", "vomit", "vomited", "throwing up", "threw up"]),
    ("dizziness", &["dizzy", "dizziness", "lightheaded", "light-headed"]),
    ("breathlessness", &["shortness of breath", "short of breath", "breathless", "trouble breathing"]),
    ("rash", &["rash", "rashes", "hives"]),
    ("itching", &["itch", "itching", "itchy"]),
    ("bleeding", &["bleeding", "bleed", "bleeds", "blood", "bloody"]),
    ("pain", &["pain", "pains", "painful", "hurt", "hurts", "hurting", "ache", "aches", "aching", "sore", "discomfort"]),
    ("swelling", &["swelling", "swollen"]),
    ("fatigue", &["fatigue", "tired", "exhausted", "exhaustion"]),
    ("numbness", &["numb", "numbness", "tingling", "pins and needles"]),
    ("diarrhoea", &["diarrhea", "diarrhoea", "loose stools"]),
    ("constipation", &["constipation", "constipated"]),
    ("weight loss", &["weight loss", "lost weight", "losing weight"]),
    ("vision changes", &["blurred vision", "blurry vision", "double vision"]),
    ("hair loss", &["hair loss", "losing hair", "hair falling out"]),
    ("palpitations", &["palpitations", "racing heart", "heart racing"]),
    ("fainting", &["faint", "fainted", "fainting", "passed out"]),
    ("seizure", &["seizure", "seizures", "convulsions"]),
    ("cramps", &["cramp", "cramps", "cramping"]),
    ("lump", &["lump", "lumps"]),
    ("discharge", &["discharge"]),
    ("chills", &["chills", "shivering"]),
    ("sweats", &["night sweats", "sweating"]),
    ("jaundice", &["jaundice", "yellow skin", "yellowing"]),
    ("bloating", &["bloated", "bloating"]),
    ("wheezing", &["wheeze", "wheezing"]),
];

static CONCEPT_PATTERNS: LazyLock<Vec<(&'static str, Regex)>> = LazyLock::new(|| {
    SYMPTOM_LEXICON
        .iter()
        .map(|(concept, phrases)| {
            let alternation = phrases.iter().map(|p| regex::escape(p)).collect::<Vec<_>>().join("|");
            (*concept, Regex::new(&format!(r"(?i)\b(?:{alternation})\b")).unwrap())
        })
        .collect()
});

static NEGATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:no|not|never|without|none|nor|neither|deny|denies|denied)\b|n't\b").unwrap()
});

static CLAUSE_BREAK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.,;:!?\n]+").unwrap());

static ROLE_BREAK_AI: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bAI\b").unwrap());
static ROLE_BREAK_MODEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\blanguage model\b").unwrap());

/// Symptom concepts asserted (not negated) anywhere in `text`.
fn asserted_concepts(text: &str) -> Vec<&'static str> {
    let text = text.replace('’', "'");
    let mut found = Vec::new();
    for clause in CLAUSE_BREAK.split(&text) {
        if NEGATION.is_match(clause) {
            continue;
        }
        for (concept, pattern) in CONCEPT_PATTERNS.iter() {
            if pattern.is_match(clause) && !found.contains(concept) {
                found.push(*concept);
            }
        }
    }
    found
}

/// Default validator: flags patient turns that claim symptoms the vignette's
/// symptom fields do not assert, and patient turns that break role.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeywordScreen;

impl KeywordScreen {
    pub fn screen_turn(&self, text: &str, allowed: &[&str]) -> Vec<String> {
        let mut problems = Vec::new();
        if ROLE_BREAK_AI.is_match(text) || ROLE_BREAK_MODEL.is_match(text) {
            problems.push("role break".to_owned());
        }
        for concept in asserted_concepts(text) {
            if !allowed.contains(&concept) {
                problems.push(format!("symptom not in vignette: {concept}"));
            }
        }
        problems
    }
}

impl FidelityValidator for KeywordScreen {
    fn check(&self, run: &DialogueRun, vignette: &Vignette) -> Result<Vec<String>, String> {
        let allowed = asserted_concepts(&vignette.symptom_text());
        let mut violations = Vec::new();
        for (n, conversation) in run.conversations().enumerate() {
            for turn in conversation.patient_turns() {
                for problem in self.screen_turn(&turn.text, &allowed) {
                    violations.push(format!("conversation {} turn {}: {problem}", n + 1, turn.index));
                }
            }
        }
        Ok(violations)
    }
}
