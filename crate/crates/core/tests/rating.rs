use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use consteval::agents::ScriptedBackend;
use consteval::corpus::{load_corpus, ConstitutionId, Corpus, DimensionId, VignetteId};
use consteval::engine::{generate_suite, DialogueRun, EngineConfig, KeywordScreen};
use consteval::rating::{
    apply_exclusions, assign_tasks, extract_comparisons, group_by_dimension, matching_index, AssignOptions, Choice,
    ComparisonResponse, ComparisonTask, ExclusionRule, ParticipantStatus, Position, RatingService, RecordError,
    RecordEvent, RecordLog, RecordStore, RunRef, ServiceError, SubmitRequest,
};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus() -> Corpus {
    load_corpus(&root().join("corpus")).unwrap()
}

fn suite(corpus: &Corpus) -> Vec<DialogueRun> {
    let backend = ScriptedBackend::from_file(&root().join("fixtures/demo.script")).unwrap();
    generate_suite(corpus, &backend, &EngineConfig::default(), &KeywordScreen).unwrap()
}

fn dims() -> Vec<DimensionId> {
    DimensionId::ALL.iter().map(|d| DimensionId::new(*d)).collect()
}

fn refs() -> Vec<RunRef> {
    let mut out = Vec::new();
    for v in ["vignette_1", "vignette_2"] {
        for c in ["best_practices", "doctor", "empathetic", "none"] {
            out.push(RunRef {
                run_id: format!("{v}__{c}"),
                vignette_id: VignetteId::new(v),
                constitution_id: ConstitutionId::new(c),
            });
        }
    }
    out
}

fn at(s: i64) -> DateTime<Utc> {
    DateTime::from_timestamp(1_700_000_000 + s, 0).unwrap()
}

fn task(pid: &str, n: usize, left: &str, right: &str) -> ComparisonTask {
    ComparisonTask {
        task_id: format!("{pid}-{n}"),
        participant_id: pid.to_owned(),
        position: if n == 1 { Position::First } else { Position::Second },
        left_run_id: format!("vignette_1__{left}"),
        right_run_id: format!("vignette_1__{right}"),
        left_constitution: ConstitutionId::new(left),
        right_constitution: ConstitutionId::new(right),
        left_vignette: VignetteId::new("vignette_1"),
        right_vignette: VignetteId::new("vignette_1"),
        left_right_order_seed: 0,
    }
}

fn response(task_id: &str, choice: Choice, checks: [bool; 2]) -> ComparisonResponse {
    ComparisonResponse {
        task_id: task_id.to_owned(),
        choices: dims().into_iter().map(|d| (d, choice)).collect(),
        comprehension_results: checks,
        submitted_at: at(100),
    }
}

/// Enrols `pid` with the matching {bp, doctor}, {empathetic, none}.
fn enrol(pid: &str) -> Vec<RecordEvent> {
    vec![
        RecordEvent::Enrolled { participant_id: pid.to_owned(), enrolled_at: at(0) },
        RecordEvent::Assigned { task: task(pid, 1, "best_practices", "doctor") },
        RecordEvent::Assigned { task: task(pid, 2, "empathetic", "none") },
    ]
}

#[test]
fn ten_thousand_assignments_keep_protocol() {
    let suite = refs();
    let mut matchings = [0usize; 3];
    let n = 10_000;
    for seed in 0..n {
        let tasks = assign_tasks("p", &suite, seed, &AssignOptions::default()).unwrap();
        for t in &tasks {
            assert_ne!(t.left_constitution, t.right_constitution);
        }
        let shown: Vec<&ConstitutionId> =
            tasks.iter().flat_map(|t| [&t.left_constitution, &t.right_constitution]).collect();
        let distinct: BTreeSet<&ConstitutionId> = shown.iter().copied().collect();
        assert_eq!((shown.len(), distinct.len()), (4, 4));
        matchings[matching_index(&tasks).unwrap()] += 1;
    }
    for count in matchings {
        let share = count as f64 / n as f64;
        assert!((share - 1.0 / 3.0).abs() <= 0.02, "{matchings:?}");
    }
}

#[test]
fn left_right_and_vignette_are_balanced() {
    let suite = refs();
    let mut left_first = 0;
    let mut v1 = 0;
    let n = 4000;
    for seed in 0..n {
        let tasks = assign_tasks("p", &suite, seed, &AssignOptions::default()).unwrap();
        if tasks[0].left_constitution < tasks[0].right_constitution {
            left_first += 1;
        }
        if tasks[0].left_vignette == "vignette_1" {
            v1 += 1;
        }
    }
    assert!((left_first as f64 / n as f64 - 0.5).abs() < 0.05);
    assert!((v1 as f64 / n as f64 - 0.5).abs() < 0.05);
}

#[test]
fn exclusion_fixture() {
    let mut events = Vec::new();
    for pid in ["p0", "p1", "p2", "p3"] {
        events.extend(enrol(pid));
    }
    events.push(RecordEvent::Responded { response: response("p0-1", Choice::Left, [true, true]) });
    events.push(RecordEvent::Responded { response: response("p0-2", Choice::Left, [true, true]) });
    events.push(RecordEvent::Responded { response: response("p1-1", Choice::Left, [true, false]) });
    events.push(RecordEvent::Responded { response: response("p1-2", Choice::Left, [true, true]) });
    events.push(RecordEvent::Responded { response: response("p2-1", Choice::Left, [false, true]) });
    events.push(RecordEvent::Responded { response: response("p2-2", Choice::Left, [true, false]) });
    events.push(RecordEvent::Responded { response: response("p3-1", Choice::Left, [true, true]) });
    let log = RecordLog::from_events(dims(), events).unwrap();
    let ex = apply_exclusions(&log);
    let decisions: Vec<bool> = ["p0", "p1", "p2", "p3"].iter().map(|p| ex.included.contains(*p)).collect();
    assert_eq!(decisions, [true, true, false, false]);
    assert_eq!(ex.statuses["p2"], ParticipantStatus::ExcludedComprehension);
    assert_eq!(ex.statuses["p3"], ParticipantStatus::ExcludedIncomplete);
    assert_eq!(ex.statuses["p0"], ParticipantStatus::Completed);
    let rules: Vec<(&str, ExclusionRule)> = ex.reports.iter().map(|r| (r.participant_id.as_str(), r.rule)).collect();
    assert_eq!(rules, [("p2", ExclusionRule::ComprehensionFail), ("p3", ExclusionRule::Incomplete)]);

    // excluded participants contribute nothing
    let pairs = extract_comparisons(&log, &ex);
    assert_eq!(pairs.len(), 2 * 2 * 7);
    assert!(pairs.iter().all(|c| c.participant_id == "p0" || c.participant_id == "p1"));
}

#[test]
fn exclusions_ignore_arrival_order() {
    let mut head = Vec::new();
    for pid in ["a", "b", "c"] {
        head.extend(enrol(pid));
    }
    let responses = vec![
        RecordEvent::Responded { response: response("a-1", Choice::Left, [false, false]) },
        RecordEvent::Responded { response: response("b-2", Choice::Right, [true, true]) },
        RecordEvent::Responded { response: response("a-2", Choice::Left, [true, true]) },
        RecordEvent::Responded { response: response("c-1", Choice::Left, [true, false]) },
        RecordEvent::Responded { response: response("b-1", Choice::Right, [true, true]) },
    ];
    let forward = RecordLog::from_events(dims(), head.iter().cloned().chain(responses.iter().cloned())).unwrap();
    let backward = RecordLog::from_events(dims(), head.into_iter().chain(responses.into_iter().rev())).unwrap();
    let (f, b) = (apply_exclusions(&forward), apply_exclusions(&backward));
    assert_eq!(f, b);
    assert_eq!(extract_comparisons(&forward, &f), extract_comparisons(&backward, &b));
    assert_eq!(f.included.iter().collect::<Vec<_>>(), ["b"]);
}

#[test]
fn record_response_errors() {
    let store = RecordStore::in_memory(dims());
    for e in enrol("p") {
        store.append(e).unwrap();
    }
    let mut skipping = response("p-1", Choice::Left, [true, true]);
    for d in ["decision_making", "enabling_behaviour"] {
        skipping.choices.insert(DimensionId::new(d), Choice::Skipped);
    }
    store.append(RecordEvent::Responded { response: skipping.clone() }).unwrap();
    assert_eq!(
        store.append(RecordEvent::Responded { response: skipping }),
        Err(RecordError::Duplicate("p-1".into()))
    );
    assert_eq!(
        store.append(RecordEvent::Responded { response: response("nope", Choice::Left, [true, true]) }),
        Err(RecordError::UnknownTask("nope".into()))
    );
    let mut no_holistic = response("p-2", Choice::Right, [true, true]);
    no_holistic.choices.remove(&DimensionId::new("holistic"));
    assert!(matches!(
        store.append(RecordEvent::Responded { response: no_holistic.clone() }),
        Err(RecordError::Malformed(m)) if m.contains("holistic")
    ));
    no_holistic.choices.insert(DimensionId::new("holistic"), Choice::Right);
    no_holistic.choices.insert(DimensionId::new("bedside_manner"), Choice::Right);
    assert!(matches!(
        store.append(RecordEvent::Responded { response: no_holistic }),
        Err(RecordError::Malformed(m)) if m.contains("bedside_manner")
    ));
    store.append(RecordEvent::Responded { response: response("p-2", Choice::Right, [true, true]) }).unwrap();

    let log = store.snapshot();
    assert_eq!(log.participants["p"].status, ParticipantStatus::Completed);
    let ex = apply_exclusions(&log);
    let pairs = extract_comparisons(&log, &ex);
    assert_eq!(pairs.len(), 2 * 7 - 2);
    let counts = store.counts();
    assert_eq!((counts.enrolled, counts.assigned, counts.responded), (1, 2, 2));
}

#[test]
fn extraction_maps_sides_to_constitutions() {
    let mut events = enrol("p");
    let mut r1 = response("p-1", Choice::Skipped, [true, true]);
    r1.choices.insert(DimensionId::new("responding_to_emotions"), Choice::Left);
    events.push(RecordEvent::Responded { response: r1 });
    events.push(RecordEvent::Responded { response: response("p-2", Choice::Skipped, [true, true]) });
    let log = RecordLog::from_events(dims(), events).unwrap();
    let ex = apply_exclusions(&log);
    let pairs = extract_comparisons(&log, &ex);
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].dimension, "responding_to_emotions");
    assert_eq!((pairs[0].winner.as_str(), pairs[0].loser.as_str()), ("best_practices", "doctor"));
    let grouped = group_by_dimension(&pairs, &dims());
    assert_eq!(grouped.len(), 7);
    assert_eq!(grouped.iter().map(|(_, p)| p.len()).sum::<usize>(), 1);
}

#[test]
fn ten_responses_one_skip_give_69_pairs() {
    let mut events = Vec::new();
    let mut responses = Vec::new();
    for k in 0..5 {
        let pid = format!("p{k}");
        events.extend(enrol(&pid));
        for n in 1..=2 {
            let choice = if (k + n) % 2 == 0 { Choice::Left } else { Choice::Right };
            responses.push(response(&format!("{pid}-{n}"), choice, [true, true]));
        }
    }
    responses[3].choices.insert(DimensionId::new("gathering_information"), Choice::Skipped);
    events.extend(responses.into_iter().map(|response| RecordEvent::Responded { response }));
    let log = RecordLog::from_events(dims(), events).unwrap();
    let ex = apply_exclusions(&log);
    assert_eq!(extract_comparisons(&log, &ex).len(), 69);
}

#[test]
fn log_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    {
        let store = RecordStore::open(&path, dims()).unwrap();
        for e in enrol("p") {
            store.append(e).unwrap();
        }
        store.append(RecordEvent::Responded { response: response("p-1", Choice::Left, [true, true]) }).unwrap();
    }
    let text = std::fs::read_to_string(&path).unwrap();
    let tags: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["event"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(tags, ["enrolled", "assigned", "assigned", "responded"]);

    let store = RecordStore::open(&path, dims()).unwrap();
    assert_eq!(store.counts().responded, 1);
    assert_eq!(
        store.append(RecordEvent::Responded { response: response("p-1", Choice::Left, [true, true]) }),
        Err(RecordError::Duplicate("p-1".into()))
    );
    store.append(RecordEvent::Responded { response: response("p-2", Choice::Left, [true, true]) }).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 5);
}

#[test]
fn corrupt_log_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    let mut text: String = enrol("p").iter().map(RecordEvent::to_line).collect();
    text.push_str("{not json}\n");
    std::fs::write(&path, text).unwrap();
    let err = RecordStore::open(&path, dims()).err().unwrap();
    assert!(err.to_string().contains("line 4"), "{err}");
}

fn all_choices(choice: Choice) -> BTreeMap<DimensionId, Choice> {
    dims().into_iter().map(|d| (d, choice)).collect()
}

#[test]
fn service_round_trip() {
    let corpus = corpus();
    let service = RatingService::new(
        suite(&corpus),
        &corpus,
        RecordStore::in_memory(corpus.dimension_ids()),
        7,
        AssignOptions::default(),
    )
    .unwrap();
    let pid = service.enroll().unwrap().participant_id;
    let list = service.tasks(&pid).unwrap();
    assert_eq!(list.tasks.len(), 2);
    assert_eq!(list.status, ParticipantStatus::Active);
    let view = &list.tasks[0];
    assert_eq!(view.dimension_questions.len(), 7);
    assert_eq!(view.left_transcript[0].text, "Hello, how can I help you today?");
    let json = serde_json::to_string(&list).unwrap();
    for hidden in ["correct_index", "best_practices", "empathetic", "run_id", "constitution"] {
        assert!(!json.contains(hidden), "task view leaks {hidden}");
    }

    // the shipped questions put the right answer at the same index for
    // every run of a vignette
    let log = service.store().snapshot();
    let t = log.tasks_of(&pid).next().unwrap().clone();
    let right = corpus.question(&t.left_run_id).unwrap().correct_index;
    let reply = service
        .submit(SubmitRequest {
            task_id: t.task_id.clone(),
            choices: all_choices(Choice::Left),
            comprehension_answers: [right, (right + 1) % 4],
        })
        .unwrap();
    assert_eq!(reply.remaining_tasks, 1);
    let stored = &service.store().snapshot().responses[&t.task_id];
    assert_eq!(stored.comprehension_results, [true, false]);

    let again = service.submit(SubmitRequest {
        task_id: t.task_id.clone(),
        choices: all_choices(Choice::Left),
        comprehension_answers: [0, 0],
    });
    assert!(matches!(again, Err(ServiceError::Record(RecordError::Duplicate(_)))));
    let out_of_range = service.submit(SubmitRequest {
        task_id: format!("{pid}-2"),
        choices: all_choices(Choice::Left),
        comprehension_answers: [9, 0],
    });
    assert!(matches!(out_of_range, Err(ServiceError::Record(RecordError::Malformed(_)))));
    assert!(matches!(service.tasks("ghost"), Err(ServiceError::Record(RecordError::UnknownParticipant(_)))));

    // incomplete so far: nothing exported
    let export = service.export();
    assert_eq!(export.included_participants, 0);
    assert!(export.dimensions.iter().all(|d| d.comparisons.is_empty()));
}

#[test]
fn concurrent_duplicates_store_one_response() {
    let corpus = corpus();
    let service = Arc::new(
        RatingService::new(
            suite(&corpus),
            &corpus,
            RecordStore::in_memory(corpus.dimension_ids()),
            3,
            AssignOptions::default(),
        )
        .unwrap(),
    );
    let pid = service.enroll().unwrap().participant_id;
    let task_id = format!("{pid}-1");
    let handles: Vec<_> = (0..16)
        .map(|_| {
            let service = Arc::clone(&service);
            let task_id = task_id.clone();
            std::thread::spawn(move || {
                service.submit(SubmitRequest {
                    task_id,
                    choices: all_choices(Choice::Right),
                    comprehension_answers: [1, 1],
                })
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    assert!(results
        .iter()
        .filter_map(|r| r.as_ref().err())
        .all(|e| matches!(e, ServiceError::Record(RecordError::Duplicate(_)))));
    assert_eq!(service.counts().responded, 1);
}

#[test]
fn service_rejects_suite_without_questions() {
    let mut corpus = corpus();
    let runs = suite(&corpus);
    corpus.questions.retain(|q| q.dialogue_ref != "vignette_2__none");
    let err = RatingService::new(runs, &corpus, RecordStore::in_memory(corpus.dimension_ids()), 1, AssignOptions::default())
        .err()
        .unwrap();
    assert!(err.to_string().contains("vignette_2__none"), "{err}");
}
