use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use consteval::agents::ScriptedBackend;
use consteval::corpus::{load_corpus, Corpus};
use consteval::engine::{generate_suite, EngineConfig, KeywordScreen};
use consteval::rating::{AssignOptions, RatingService, RecordStore};
use consteval_server::{router, serve, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus() -> Corpus {
    load_corpus(&root().join("corpus")).unwrap()
}

fn state(store: RecordStore) -> Arc<AppState> {
    let corpus = corpus();
    let backend = ScriptedBackend::from_file(&root().join("fixtures/demo.script")).unwrap();
    let runs = generate_suite(&corpus, &backend, &EngineConfig::default(), &KeywordScreen).unwrap();
    let service = RatingService::new(runs, &corpus, store, 11, AssignOptions::default()).unwrap();
    Arc::new(AppState { service, admin_token: Some("s3cret".into()) })
}

fn memory_state() -> Arc<AppState> {
    state(RecordStore::in_memory(corpus().dimension_ids()))
}

async fn call(state: &Arc<AppState>, method: Method, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), 1 << 22).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

fn choices(value: &str) -> Value {
    let dims = [
        "fostering_relationship",
        "gathering_information",
        "providing_information",
        "decision_making",
        "enabling_behaviour",
        "responding_to_emotions",
        "holistic",
    ];
    Value::Object(dims.iter().map(|d| (d.to_string(), json!(value))).collect())
}

#[tokio::test]
async fn enrol_fetch_respond_export() {
    let state = memory_state();
    let (status, body) = call(&state, Method::POST, "/participants", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let pid = body["participant_id"].as_str().unwrap().to_owned();

    let (status, body) = call(&state, Method::GET, &format!("/participants/{pid}/tasks"), None, None).await;
    assert_eq!(status, StatusCode::OK);
    let tasks = body["tasks"].as_array().unwrap();
    assert_eq!(tasks.len(), 2);
    assert_eq!(tasks[0]["dimension_questions"].as_array().unwrap().len(), 7);
    assert_eq!(tasks[0]["comprehension"].as_array().unwrap().len(), 2);
    assert!(tasks[0]["comprehension"][0].get("correct_index").is_none());
    assert_eq!(tasks[0]["left_transcript"][0]["speaker"], "doctor");

    for t in tasks {
        let id = t["task_id"].as_str().unwrap();
        let body = json!({ "task_id": id, "choices": choices("left"), "comprehension_answers": [1, 1] });
        let (status, reply) = call(&state, Method::POST, "/responses", Some(body), None).await;
        assert_eq!(status, StatusCode::OK, "{reply}");
    }

    let (status, _) = call(&state, Method::GET, "/admin/export", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call(&state, Method::GET, "/admin/export", None, Some("wrong")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, export) = call(&state, Method::GET, "/admin/export", None, Some("s3cret")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(export["dimensions"].as_array().unwrap().len(), 7);
    let included = export["included_participants"].as_u64().unwrap();
    let per_dim = export["dimensions"][0]["comparisons"].as_array().unwrap().len();
    // answer 1 is only right for vignette 1 dialogues
    assert!(included <= 1);
    assert_eq!(per_dim as u64, included * 2);
}

#[tokio::test]
async fn error_codes() {
    let state = memory_state();
    let (_, body) = call(&state, Method::POST, "/participants", None, None).await;
    let pid = body["participant_id"].as_str().unwrap().to_owned();
    let task = format!("{pid}-1");

    let ok = json!({ "task_id": task, "choices": choices("skipped"), "comprehension_answers": [0, 0] });
    assert_eq!(call(&state, Method::POST, "/responses", Some(ok.clone()), None).await.0, StatusCode::OK);
    assert_eq!(call(&state, Method::POST, "/responses", Some(ok), None).await.0, StatusCode::CONFLICT);

    let unknown = json!({ "task_id": "nope", "choices": choices("left"), "comprehension_answers": [0, 0] });
    assert_eq!(call(&state, Method::POST, "/responses", Some(unknown), None).await.0, StatusCode::NOT_FOUND);

    let mut partial = choices("left");
    partial.as_object_mut().unwrap().remove("holistic");
    let missing = json!({ "task_id": format!("{pid}-2"), "choices": partial, "comprehension_answers": [0, 0] });
    let (status, body) = call(&state, Method::POST, "/responses", Some(missing), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("holistic"));

    let one_answer = json!({ "task_id": format!("{pid}-2"), "choices": choices("left"), "comprehension_answers": [0] });
    assert_eq!(call(&state, Method::POST, "/responses", Some(one_answer), None).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let bad_choice = json!({ "task_id": format!("{pid}-2"), "choices": choices("both"), "comprehension_answers": [0, 0] });
    assert_eq!(call(&state, Method::POST, "/responses", Some(bad_choice), None).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    assert_eq!(call(&state, Method::GET, "/participants/ghost/tasks", None, None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn export_refuses_without_configured_token() {
    let corpus = corpus();
    let backend = ScriptedBackend::from_file(&root().join("fixtures/demo.script")).unwrap();
    let runs = generate_suite(&corpus, &backend, &EngineConfig::default(), &KeywordScreen).unwrap();
    let service =
        RatingService::new(runs, &corpus, RecordStore::in_memory(corpus.dimension_ids()), 1, AssignOptions::default())
            .unwrap();
    let state = Arc::new(AppState { service, admin_token: None });
    assert_eq!(call(&state, Method::GET, "/admin/export", None, Some("")).await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn real_socket_round_trip_persists_log() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    let state = state(RecordStore::open(&path, corpus().dimension_ids()).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, state.clone(), async {
        rx.await.ok();
    }));

    let client = reqwest::Client::new();
    let base = format!("http://{addr}");
    let enrolled: Value = client.post(format!("{base}/participants")).send().await.unwrap().json().await.unwrap();
    let pid = enrolled["participant_id"].as_str().unwrap();
    let tasks: Value = client.get(format!("{base}/participants/{pid}/tasks")).send().await.unwrap().json().await.unwrap();
    let task_id = tasks["tasks"][0]["task_id"].as_str().unwrap();
    let body = json!({ "task_id": task_id, "choices": choices("right"), "comprehension_answers": [1, 2] });
    let resp = client.post(format!("{base}/responses")).json(&body).send().await.unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let resp = client.post(format!("{base}/responses")).json(&body).send().await.unwrap();
    assert_eq!(resp.status().as_u16(), 409);

    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
    let counts = state.service.counts();
    assert_eq!((counts.enrolled, counts.assigned, counts.responded), (1, 2, 1));
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);
}
