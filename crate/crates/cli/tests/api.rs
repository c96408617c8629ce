use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use erag_cli::{router, AppState};
use erag_core::embed::EmbedderProfile;
use erag_core::llm::LlmConfig;
use erag_core::{EngineConfig, SessionStore};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn small_config() -> EngineConfig {
    let mut c = EngineConfig::default();
    c.embedders.insert("small".into(), EmbedderProfile::local("small", 64));
    c.embedder = "small".into();
    c
}

fn app_with(config: EngineConfig) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(config, None, None, SessionStore::in_memory()));
    (router(state.clone()), state)
}

fn app() -> Router {
    app_with(small_config()).0
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value =
        serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("non-JSON body: {}", String::from_utf8_lossy(&bytes)));
    (status, value)
}

fn docs() -> Value {
    json!({"documents": [
        {"file_name": "hr/leave.md", "content": "# Leave\n\nEmployees receive 24 days of annual leave per year.\n\nUnused leave lapses at the end of March."},
        {"file_name": "hr/parental.txt", "content": "Parental leave is 26 weeks for the primary caregiver. Secondary caregivers get 2 weeks."},
        {"file_name": "finance/grades.csv", "content": "grade,hotel_limit,approver\nG1,3000,manager\nG2,5000,director\n"}
    ]})
}

async fn ingested() -> Router {
    let app = app();
    let (status, _) = call(&app, "POST", "/v1/ingest", Some(docs())).await;
    assert_eq!(status, StatusCode::OK);
    app
}

async fn ask(app: &Router, session: &str, q: &str) -> Value {
    let (status, body) = call(
        app,
        "POST",
        "/v1/query",
        Some(json!({"session_id": session, "query": q, "profile": "advanced"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    body
}

fn assert_error(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
}

/// Required fields of a published schema are present, recursing through refs.
fn conforms(spec: &Value, schema: &str, value: &Value) {
    let s = &spec["components"]["schemas"][schema];
    assert!(s.is_object(), "no schema {schema}");
    for field in s["required"].as_array().into_iter().flatten() {
        let f = field.as_str().unwrap();
        assert!(value.get(f).is_some(), "{schema} response lacks {f}: {value}");
    }
    for (name, prop) in s["properties"].as_object().into_iter().flatten() {
        let Some(v) = value.get(name).filter(|v| !v.is_null()) else {
            continue;
        };
        let r = prop["$ref"]
            .as_str()
            .or_else(|| prop["items"]["$ref"].as_str())
            .or_else(|| prop["allOf"][0]["$ref"].as_str());
        if let Some(r) = r {
            let inner = r.rsplit('/').next().unwrap();
            match v.as_array() {
                Some(items) => items.iter().for_each(|i| conforms(spec, inner, i)),
                None => conforms(spec, inner, v),
            }
        }
    }
}

#[tokio::test]
async fn query_before_ingest_is_404() {
    let (status, body) = call(
        &app(),
        "POST",
        "/v1/query",
        Some(json!({"session_id": "s", "query": "leave"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "not_found");
}

#[tokio::test]
async fn ingest_is_idempotent() {
    let app = app();
    let (s1, a) = call(&app, "POST", "/v1/ingest", Some(docs())).await;
    let (s2, b) = call(&app, "POST", "/v1/ingest", Some(docs())).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert!(a["chunk_count"].as_u64().unwrap() > 0);
    assert_eq!(a, b);
}

#[tokio::test]
async fn ragged_table_names_the_row() {
    let body = json!({"documents": [{"file_name": "bad.csv", "content": "a,b,c\n1,2,3\n4,5\n"}]});
    let (status, err) = call(&app(), "POST", "/v1/ingest", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "bad_request");
    assert!(err["message"].as_str().unwrap().contains("row 3"), "{err}");
}

#[tokio::test]
async fn ingest_takes_partial_config() {
    let mut body = docs();
    body["config"] = json!({"embedders": {"tiny": {"name": "tiny", "dims": 32}}, "embedder": "tiny"});
    let (status, _) = call(&app(), "POST", "/v1/ingest", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK);
    body["config"] = json!({"profiles": {"advanced": {"w_dense": 0.9}}});
    let (status, err) = call(&app(), "POST", "/v1/ingest", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "bad_request");
}

#[tokio::test]
async fn ingest_without_documents_is_400() {
    let (status, err) = call(&app(), "POST", "/v1/ingest", Some(json!({}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "bad_request");
}

#[tokio::test]
async fn build_in_progress_is_409() {
    let (app, state) = app_with(small_config());
    let guard = state.try_begin_build().unwrap();
    let (status, err) = call(&app, "POST", "/v1/ingest", Some(docs())).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&err, "conflict");
    let (status, _) = call(
        &app,
        "POST",
        "/v1/query",
        Some(json!({"session_id": "s", "query": "leave"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    drop(guard);
    let (status, _) = call(&app, "POST", "/v1/ingest", Some(docs())).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn concurrent_ingests_one_wins_or_both_serialize() {
    let app = app();
    let (a, b) = tokio::join!(
        call(&app, "POST", "/v1/ingest", Some(docs())),
        call(&app, "POST", "/v1/ingest", Some(docs()))
    );
    let statuses = [a.0, b.0];
    assert!(statuses.contains(&StatusCode::OK));
    assert!(statuses
        .iter()
        .all(|s| *s == StatusCode::OK || *s == StatusCode::CONFLICT));
}

#[tokio::test]
async fn mock_query_is_deterministic_and_grounded() {
    let a = ask(
        &ingested().await,
        "s1",
        "How many days of annual leave do employees receive?",
    )
    .await;
    let b = ask(
        &ingested().await,
        "s1",
        "How many days of annual leave do employees receive?",
    )
    .await;
    assert_eq!(a, b);
    assert_eq!(a["turn_id"], "t1");
    assert_eq!(a["reformulated"], false);
    let sources: Vec<&str> = a["sources"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["chunk_id"].as_str().unwrap())
        .collect();
    assert!(!sources.is_empty());
    for c in a["citations"].as_array().unwrap() {
        assert!(sources.contains(&c.as_str().unwrap()));
    }
    assert!(a["sources"][0]["fused"].is_number());
    assert!(a["sources"][0]["rerank"].is_number());
}

#[tokio::test]
async fn bad_profile_and_bad_json_are_400() {
    let app = ingested().await;
    let (status, err) = call(
        &app,
        "POST",
        "/v1/query",
        Some(json!({"session_id": "s", "query": "x", "profile": "fancy"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "bad_request");
    let req = Request::post("/v1/query")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let (status, err) = call(
        &app,
        "POST",
        "/v1/query",
        Some(json!({"session_id": "../x", "query": "leave"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "bad_request");
}

#[tokio::test]
async fn dead_llm_is_502_at_generate() {
    let mut config = small_config();
    config.llm = LlmConfig::remote("http://127.0.0.1:9/v1/chat/completions", "m");
    let (app, _) = app_with(config);
    let (status, _) = call(&app, "POST", "/v1/ingest", Some(docs())).await;
    assert_eq!(status, StatusCode::OK);
    let body =
        json!({"session_id": "s", "query": "How many days of annual leave do employees receive?", "profile": "naive"});
    let (status, err) = call(&app, "POST", "/v1/query", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_error(&err, "upstream_unavailable");
    assert_eq!(err["stage"], "generate");
}

#[tokio::test]
async fn feedback_contract() {
    let app = ingested().await;
    for q in [
        "annual leave days",
        "parental leave weeks",
        "hotel limit for G2",
        "who approves G1",
    ] {
        ask(&app, "fb", q).await;
    }
    let fb = |turn: &str, verdict: &str| json!({"session_id": "fb", "turn_id": turn, "verdict": verdict});

    let (status, up) = call(&app, "POST", "/v1/feedback", Some(fb("t1", "up"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(up["retried"], false);
    assert!(up["new_answer"].is_null());

    for (i, turn) in ["t1", "t2", "t3"].iter().enumerate() {
        let (status, down) = call(&app, "POST", "/v1/feedback", Some(fb(turn, "down"))).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(down["retried"], true, "down #{i}");
        assert_eq!(down["new_answer"]["reformulated"], true);
        assert_ne!(down["new_answer"]["final_query"], down["new_answer"]["query"]);
    }
    let (_, spent) = call(&app, "POST", "/v1/feedback", Some(fb("t4", "down"))).await;
    assert_eq!(spent["retried"], false);
    assert_eq!(spent["budget_exhausted"], true);

    let (status, err) = call(&app, "POST", "/v1/feedback", Some(fb("t99", "down"))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&err, "not_found");
    let (status, err) = call(&app, "POST", "/v1/feedback", Some(fb("t1", "sideways"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&err, "bad_request");
    let (status, _) = call(
        &app,
        "POST",
        "/v1/feedback",
        Some(json!({"session_id": "nobody", "turn_id": "t1", "verdict": "up"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, view) = call(&app, "GET", "/v1/sessions/fb", None).await;
    assert_eq!(view["retry_budget_left"], 0);
    let turns = view["turns"].as_array().unwrap();
    assert_eq!(turns.len(), 7);
    assert_eq!(turns[0]["feedback"], "down");
    assert_eq!(turns[0]["retried"], true);
    assert_eq!(turns[4]["retry_of"], "t1");
}

#[tokio::test]
async fn session_window() {
    let app = ingested().await;
    ask(&app, "w", "annual leave").await;
    ask(&app, "w", "parental leave").await;
    let (status, view) = call(&app, "GET", "/v1/sessions/w", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["turns"].as_array().unwrap().len(), 2);
    for i in 3..=15 {
        ask(&app, "w", &format!("hotel limit question {i}")).await;
    }
    let (_, view) = call(&app, "GET", "/v1/sessions/w", None).await;
    let ids: Vec<&str> = view["turns"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["turn_id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, (6..=15).map(|i| format!("t{i}")).collect::<Vec<_>>());
    let (status, err) = call(&app, "GET", "/v1/sessions/nobody", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&err, "not_found");
}

#[tokio::test]
async fn same_session_queries_are_serialized() {
    let app = ingested().await;
    let qs = [
        "annual leave",
        "parental leave",
        "hotel limit",
        "approver",
        "lapse date",
    ];
    let results = futures_join(&app, &qs).await;
    let mut ids: Vec<String> = results
        .iter()
        .map(|b| b["turn_id"].as_str().unwrap().to_string())
        .collect();
    ids.sort();
    assert_eq!(ids, ["t1", "t2", "t3", "t4", "t5"]);
    let (_, view) = call(&app, "GET", "/v1/sessions/race", None).await;
    assert_eq!(view["turns"].as_array().unwrap().len(), 5);
}

async fn futures_join(app: &Router, qs: &[&str]) -> Vec<Value> {
    let handles: Vec<_> = qs
        .iter()
        .map(|q| {
            let app = app.clone();
            let q = q.to_string();
            tokio::spawn(async move { ask(&app, "race", &q).await })
        })
        .collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}

#[tokio::test]
async fn responses_match_published_schemas() {
    let app = ingested().await;
    let (status, spec) = call(&app, "GET", "/v1/spec", None).await;
    assert_eq!(status, StatusCode::OK);
    for path in ["/v1/ingest", "/v1/query", "/v1/feedback", "/v1/sessions/{id}"] {
        assert!(spec["paths"][path].is_object(), "spec lacks {path}");
    }
    let (_, ingest) = call(&app, "POST", "/v1/ingest", Some(docs())).await;
    conforms(&spec, "IngestResponse", &ingest);
    let answer = ask(&app, "sch", "annual leave days").await;
    conforms(&spec, "GroundedAnswer", &answer);
    let (_, fb) = call(
        &app,
        "POST",
        "/v1/feedback",
        Some(json!({"session_id": "sch", "turn_id": "t1", "verdict": "down"})),
    )
    .await;
    conforms(&spec, "FeedbackOutcome", &fb);
    let (_, view) = call(&app, "GET", "/v1/sessions/sch", None).await;
    conforms(&spec, "SessionView", &view);
    let (_, err) = call(&app, "GET", "/v1/nowhere", None).await;
    conforms(&spec, "ApiError", &err);
    let (_, health) = call(&app, "GET", "/v1/health", None).await;
    conforms(&spec, "Health", &health);
    assert_eq!(health["index_version"], ingest["index_version"]);
}

#[tokio::test]
async fn index_and_sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let first = Arc::new(AppState::open(dir.path().to_path_buf(), Some(small_config())).unwrap());
    let app = router(first);
    let (_, ingest) = call(&app, "POST", "/v1/ingest", Some(docs())).await;
    let before = ask(&app, "keep", "annual leave days").await;
    call(
        &app,
        "POST",
        "/v1/feedback",
        Some(json!({"session_id": "keep", "turn_id": "t1", "verdict": "down"})),
    )
    .await;
    drop(app);

    let second = Arc::new(AppState::open(dir.path().to_path_buf(), None).unwrap());
    let app = router(second);
    let (_, health) = call(&app, "GET", "/v1/health", None).await;
    assert_eq!(health["index_version"], ingest["index_version"]);
    let (_, view) = call(&app, "GET", "/v1/sessions/keep", None).await;
    assert_eq!(view["turns"][0]["answer_text"], before["answer_text"]);
    assert_eq!(view["turns"][0]["feedback"], "down");
    assert_eq!(view["retry_budget_left"], 2);
    let next = ask(&app, "keep", "parental leave").await;
    assert_eq!(next["turn_id"], "t3");
}
