use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use consteval::agents::{
    AgentRole, Author, BackendError, BackendMode, CallSite, Completion, PromptContext, ScriptedBackend, TextBackend,
    ACKNOWLEDGEMENT, NEXT_ROUND,
};
use consteval::corpus::{load_corpus, Corpus, Vignette};
use consteval::engine::{generate_suite, DialogueRun, EngineConfig, EngineError, KeywordScreen, Speaker, Validation};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus() -> Corpus {
    load_corpus(&root().join("corpus")).unwrap()
}

fn demo_backend() -> ScriptedBackend {
    ScriptedBackend::from_file(&root().join("fixtures/demo.script")).unwrap()
}

/// Records every call it forwards.
struct Recording<B> {
    inner: B,
    calls: Mutex<Vec<(AgentRole, String, String, u32)>>,
}

impl<B> Recording<B> {
    fn new(inner: B) -> Self {
        Self { inner, calls: Mutex::new(Vec::new()) }
    }

    fn count(&self, role: AgentRole, vignette: &str, constitution: &str) -> usize {
        self.calls
            .lock()
            .unwrap()
            .iter()
            .filter(|(r, v, c, _)| *r == role && v == vignette && c == constitution)
            .count()
    }
}

impl<B: TextBackend> TextBackend for Recording<B> {
    fn complete(&self, call: &CallSite, ctx: &PromptContext) -> Result<Completion, BackendError> {
        self.calls.lock().unwrap().push((
            call.role,
            call.vignette.to_owned(),
            call.constitution.to_owned(),
            call.attempt,
        ));
        self.inner.complete(call, ctx)
    }

    fn mode(&self) -> BackendMode {
        BackendMode::Scripted
    }
}

/// Answers by role without a script; the moderator stops after the first
/// patient reply.
struct Formulaic {
    critic_calls: AtomicUsize,
}

impl TextBackend for Formulaic {
    fn complete(&self, call: &CallSite, _ctx: &PromptContext) -> Result<Completion, BackendError> {
        let text = match call.role {
            AgentRole::Doctor => "What brings you in?".to_owned(),
            AgentRole::Patient => format!("I'm here about my {} symptoms.", call.vignette),
            AgentRole::Moderator => "STOP".to_owned(),
            AgentRole::Critic => {
                let n = self.critic_calls.fetch_add(1, Ordering::SeqCst);
                format!("feedback {n} for {}", call.constitution)
            }
        };
        Ok(Completion { text, attempts: 1 })
    }

    fn mode(&self) -> BackendMode {
        BackendMode::Scripted
    }
}

fn feedback_exchange_positions(run: &DialogueRun) -> Vec<usize> {
    let m = &run.doctor_context.messages;
    (0..m.len().saturating_sub(3))
        .filter(|&i| {
            m[i].author == Author::User
                && m[i].text.starts_with("Here is feedback on your previous interaction with the patient: ")
                && m[i + 1].text == ACKNOWLEDGEMENT
                && m[i + 2].text == NEXT_ROUND
                && m[i + 3].text == "Hello, how can I help you today?"
        })
        .collect()
}

#[test]
fn demo_script_yields_eight_valid_runs() {
    let corpus = corpus();
    let runs = generate_suite(&corpus, &demo_backend(), &EngineConfig::default(), &KeywordScreen).unwrap();
    assert_eq!(runs.len(), 8);
    let ids: Vec<_> = runs.iter().map(|r| r.run_id.as_str()).collect();
    assert_eq!(
        ids,
        [
            "vignette_1__best_practices",
            "vignette_1__doctor",
            "vignette_1__empathetic",
            "vignette_1__none",
            "vignette_2__best_practices",
            "vignette_2__doctor",
            "vignette_2__empathetic",
            "vignette_2__none",
        ]
    );
    for run in &runs {
        assert_eq!(run.validation, Validation::Valid, "{}: {:?}", run.run_id, run.validation_notes);
        assert_eq!(run.regeneration_count, 0);
        assert!(run.conversation_1.is_well_formed() && run.conversation_2.is_well_formed());
        assert_eq!(run.conversation_1.turns.len(), 6);
        assert_eq!(run.conversation_2.turns.len(), 6);
        assert_eq!(run.conversation_2.turns[0].text, "Hello, how can I help you today?");
        assert_eq!(feedback_exchange_positions(run).len(), 1, "{}", run.run_id);
        run.doctor_context.check_alternation().unwrap();
    }
    let bp = &runs[0];
    assert!(bp.critic_feedback.starts_with("You gathered key facts efficiently."));
    assert!(bp.conversation_2.turns[4].text.contains("vitiligo"));
}

#[test]
fn first_patient_turn_shared_within_vignette() {
    let corpus = corpus();
    let runs = generate_suite(&corpus, &demo_backend(), &EngineConfig::default(), &KeywordScreen).unwrap();
    for v in ["vignette_1", "vignette_2"] {
        let firsts: Vec<_> = runs
            .iter()
            .filter(|r| r.vignette_id == v)
            .flat_map(|r| [&r.conversation_1.turns[1], &r.conversation_2.turns[1]])
            .collect();
        assert_eq!(firsts.len(), 8);
        assert!(firsts.iter().all(|t| t.speaker == Speaker::Patient && t.text == firsts[0].text));
    }
}

#[test]
fn patient_first_turn_generated_once_per_vignette() {
    let corpus = corpus();
    let backend = Recording::new(demo_backend());
    generate_suite(&corpus, &backend, &EngineConfig::default(), &KeywordScreen).unwrap();
    let calls = backend.calls.lock().unwrap();
    // three patient replies are generated in conversation 1 of the first cell
    // and two in every other conversation
    for v in ["vignette_1", "vignette_2"] {
        let n = calls.iter().filter(|(r, cv, _, _)| *r == AgentRole::Patient && cv == v).count();
        assert_eq!(n, 3 + 2 + 3 * (2 + 2), "{v}");
    }
}

#[test]
fn one_critic_call_per_round() {
    let corpus = corpus();
    let backend = Recording::new(demo_backend());
    generate_suite(&corpus, &backend, &EngineConfig::default(), &KeywordScreen).unwrap();
    for v in &corpus.vignettes {
        for c in &corpus.constitutions {
            assert_eq!(backend.count(AgentRole::Critic, v.id.as_str(), c.id.as_str()), 1);
        }
    }
}

#[test]
fn parallel_generation_matches_sequential() {
    let corpus = corpus();
    let seq = generate_suite(&corpus, &demo_backend(), &EngineConfig::default(), &KeywordScreen).unwrap();
    let cfg = EngineConfig { parallelism: 4, ..EngineConfig::default() };
    let par = generate_suite(&corpus, &demo_backend(), &cfg, &KeywordScreen).unwrap();
    assert_eq!(seq, par);
    assert_eq!(serde_json::to_string(&seq).unwrap(), serde_json::to_string(&par).unwrap());
}

#[test]
fn two_critic_rounds_keep_history() {
    let corpus = corpus();
    let backend = Formulaic { critic_calls: AtomicUsize::new(0) };
    let cfg = EngineConfig { critic_rounds: 2, ..EngineConfig::default() };
    let runs = generate_suite(&corpus, &backend, &cfg, &KeywordScreen).unwrap();
    assert_eq!(backend.critic_calls.load(Ordering::SeqCst), 16);
    for run in &runs {
        assert_eq!(run.feedback_history.len(), 2);
        assert_eq!(run.critic_feedback, run.feedback_history[1]);
        assert_eq!(run.intermediate_conversations.len(), 1);
        assert_eq!(feedback_exchange_positions(run).len(), 2);
        assert_eq!(run.conversations().count(), 3);
    }
}

#[test]
fn violation_triggers_one_regeneration() {
    let corpus = corpus();
    let script = "\
doctor\t0\tHello, how can I help you today?
patient\t1\tI have had crushing chest pain since this morning.
patient\t1\tI've noticed some pale patches on my skin.
moderator\t2\tSTOP
critic\t2\tAsk more open questions.
moderator\t4\tSTOP
";
    let backend = ScriptedBackend::parse(script).unwrap();
    let mut one = corpus.clone();
    one.vignettes.truncate(1);
    one.constitutions.truncate(1);
    let runs = generate_suite(&one, &backend, &EngineConfig::default(), &KeywordScreen).unwrap();
    assert_eq!(runs[0].regeneration_count, 1);
    assert_eq!(runs[0].conversation_1.turns[1].text, "I've noticed some pale patches on my skin.");
    assert_eq!(runs[0].conversation_2.turns[1].text, "I've noticed some pale patches on my skin.");
}

#[test]
fn rejecting_validator_exhausts_budget() {
    let corpus = corpus();
    let attempts = AtomicUsize::new(0);
    let reject = |_: &DialogueRun, _: &Vignette| -> Result<Vec<String>, String> {
        attempts.fetch_add(1, Ordering::SeqCst);
        Ok(vec!["always wrong".to_owned()])
    };
    let backend = Formulaic { critic_calls: AtomicUsize::new(0) };
    let err = generate_suite(&corpus, &backend, &EngineConfig::default(), &reject).unwrap_err();
    match err {
        EngineError::RegenerationBudget { vignette, constitution, attempts: n, reason } => {
            assert_eq!((vignette.as_str(), constitution.as_str()), ("vignette_1", "best_practices"));
            assert_eq!(n, 4);
            assert_eq!(reason, "always wrong");
        }
        other => panic!("unexpected error: {other}"),
    }
    assert_eq!(attempts.load(Ordering::SeqCst), 4);
}

#[test]
fn exhausted_script_names_the_cell() {
    let corpus = corpus();
    let backend = ScriptedBackend::parse("doctor\t0\tHello.\n").unwrap();
    let err = generate_suite(&corpus, &backend, &EngineConfig::default(), &KeywordScreen).unwrap_err();
    let message = err.to_string();
    assert!(message.contains("vignette_1/best_practices"), "{message}");
    assert!(err.partial_transcript().is_some_and(|t| t.len() == 1), "{message}");
}
