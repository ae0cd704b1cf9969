use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use delib_core::dataset::{generate_synthetic, Dataset, Schema, SyntheticConfig};
use delib_core::knowledge::KnowledgeExtractor;
use delib_core::llm::{rubric_for_strength, AdapterError, LlmAdapter, MockAdapter, RegulatedPrompt, RetryPolicy, RubricMode};
use delib_core::model::{fit, ModelSnapshot};
use delib_core::session::{Clock, Engine, JsonlStore, MemoryStore, SessionStore};
use delib_service::{router, AppState};

fn data() -> (Dataset, Dataset) {
    let d = generate_synthetic(&Schema::admissions(), &SyntheticConfig::new(160, 11)).unwrap();
    d.split(0.75, 3).unwrap()
}

fn app_with(
    adjust: impl FnOnce(ModelSnapshot, &Dataset) -> ModelSnapshot,
    adapter: Arc<dyn LlmAdapter>,
    store: Arc<dyn SessionStore>,
) -> (Router, String) {
    let (train, test) = data();
    let model = adjust(fit(&train).unwrap(), &test);
    let case = test.rows()[0].profile.id.clone();
    let kx = KnowledgeExtractor::new(Arc::new(train), Arc::new(model)).unwrap();
    let engine = Engine::new(Arc::new(kx), Arc::new(test), adapter)
        .with_retry_policy(RetryPolicy::immediate())
        .with_clock(Clock::Logical);
    (router(Arc::new(AppState::new(engine, store))), case)
}

fn app() -> (Router, String) {
    app_with(|m, _| m, Arc::new(MockAdapter::new(1)), Arc::new(MemoryStore::new()))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body.map(|b| b.to_string())).await;
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into_owned()))
    };
    (status, value)
}

async fn call_raw(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(b) => {
            req = req.header("content-type", "application/json");
            Body::from(b)
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn create(app: &Router, case: &str) -> String {
    let (status, body) = call(app, Method::POST, "/sessions", Some(json!({ "case_id": case }))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["session_id"].as_str().unwrap().to_string()
}

/// Opinions 12 points away from the AI on GPA and equal elsewhere. The AI
/// values come from the revealed state of a scratch session on the same
/// case, since the real session withholds them.
async fn opinions_against_gpa(app: &Router, case: &str) -> BTreeMap<String, f64> {
    let scratch = create(app, case).await;
    let zeros: BTreeMap<String, f64> = Schema::admissions().names().map(|n| (n.to_string(), 0.0)).collect();
    let (_, step) = call(app, Method::POST, &format!("/sessions/{scratch}/opinions"), Some(json!(zeros))).await;
    step["session"]["ai"]["woe"]["opinions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| {
            let attr = o["attr"].as_str().unwrap().to_string();
            let c = o["contribution"].as_f64().unwrap();
            let v = if attr == "gpa" { if c > 0.0 { c - 12.0 } else { c + 12.0 } } else { c };
            (attr, v)
        })
        .collect()
}

fn assert_error(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
    assert!(body.get("phase").is_some());
}

#[tokio::test]
async fn create_withholds_ai_opinions() {
    let (app, case) = app();
    let (status, body) = call(&app, Method::POST, "/sessions", Some(json!({ "case_id": case }))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["phase"], "awaiting_human_elicitation");
    assert!(body["ai"].is_null());
    let text = body.to_string();
    assert!(!text.contains("contribution"), "{text}");
    assert!(!text.contains("uncertainty"), "{text}");
    let id = body["session_id"].as_str().unwrap();
    let (status, got) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(got["ai"].is_null());
    assert!(!got.to_string().contains("contribution"));
    let (_, transcript) = call(&app, Method::GET, &format!("/sessions/{id}/transcript"), None).await;
    assert_eq!(transcript["entries"], json!([]));
}

#[tokio::test]
async fn two_creates_have_distinct_ids() {
    let (app, case) = app();
    let a = create(&app, &case).await;
    let b = create(&app, &case).await;
    assert_ne!(a, b);
}

#[tokio::test]
async fn unknown_case_and_session_are_not_found() {
    let (app, _) = app();
    let (status, body) = call(&app, Method::POST, "/sessions", Some(json!({ "case_id": "nope" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "unknown_case");
    let (status, body) = call(&app, Method::GET, "/sessions/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "unknown_session");
    let (status, body) = call(&app, Method::GET, "/sessions/..%2Fescape", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "unknown_session");
}

#[tokio::test]
async fn malformed_bodies_are_bad_requests() {
    let (app, case) = app();
    let id = create(&app, &case).await;
    let (status, body) = call_raw(&app, Method::POST, "/sessions", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&serde_json::from_slice(&body).unwrap(), "bad_request");
    let (status, body) = call(&app, Method::POST, &format!("/sessions/{id}/opinions"), Some(json!({ "gpa": 3.0 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "invalid_opinions");
    assert_eq!(body["phase"], "awaiting_human_elicitation");
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/decision"), Some(json!({ "decision": "maybe" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn messages_are_phase_guarded() {
    let (app, case) = app();
    let ops = opinions_against_gpa(&app, &case).await;
    let id = create(&app, &case).await;
    let uri = format!("/sessions/{id}/messages");
    let (status, body) = call(&app, Method::POST, &uri, Some(json!({ "text": "Is the GPA low?" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&body, "wrong_phase");
    let (status, step) = call(&app, Method::POST, &format!("/sessions/{id}/opinions"), Some(json!({ "opinions": ops }))).await;
    assert_eq!(status, StatusCode::OK, "{step}");
    assert_eq!(step["phase"], "ai_disclosure");
    assert!(step["session"]["ai"]["woe"].is_object());
    let (status, body) = call(&app, Method::POST, &uri, Some(json!({ "text": "Is the GPA low?" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&body, "wrong_phase");
    assert_eq!(body["phase"], "ai_disclosure");
    let (status, body) = call(&app, Method::POST, &format!("/sessions/{id}/opinions"), Some(json!(ops))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&body, "illegal_event");
}

#[tokio::test]
async fn distribution_question_cites_percentile_without_change() {
    let (app, case) = app();
    let ops = opinions_against_gpa(&app, &case).await;
    let id = create(&app, &case).await;
    call(&app, Method::POST, &format!("/sessions/{id}/opinions"), Some(json!(ops))).await;
    let uri = format!("/sessions/{id}/messages");
    let (status, step) = call(&app, Method::POST, &uri, Some(json!({ "quick_option": "continue" }))).await;
    assert_eq!(status, StatusCode::OK, "{step}");
    assert_eq!(step["phase"], "human_turn");
    assert_eq!(step["session"]["dialogue"]["current_attr"], "gpa");
    let (status, step) = call(&app, Method::POST, &uri, Some(json!({ "text": "Is this GPA below average?" }))).await;
    assert_eq!(status, StatusCode::OK, "{step}");
    assert_eq!(step["phase"], "offer_options");
    assert!(step["opinion_change"].is_null());
    let reply = step["messages"].as_array().unwrap().last().unwrap();
    let fact = reply["cited_facts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["label"].as_str().unwrap().starts_with("percentile of GPA"))
        .expect("percentile cited");
    assert!(reply["text"].as_str().unwrap().contains(fact["value"].as_str().unwrap()));
}

#[tokio::test]
async fn strong_argument_moves_ai_opinion_by_update_rule() {
    let (app, case) = app_with(
        |m, test| {
            let score = m.score(&test.rows()[0].profile).unwrap();
            let margin = m.thresholds.iter().map(|t| (score - t).abs()).fold(f64::INFINITY, f64::min);
            m.with_residual_halfgap(2.0 * margin).unwrap()
        },
        Arc::new(MockAdapter::new(3).with_rubric(RubricMode::Fixed(rubric_for_strength(1.0)))),
        Arc::new(MemoryStore::new()),
    );
    let ops = opinions_against_gpa(&app, &case).await;
    let id = create(&app, &case).await;
    let (_, step) = call(&app, Method::POST, &format!("/sessions/{id}/opinions"), Some(json!(ops))).await;
    let ai = &step["session"]["ai"];
    assert!((ai["prediction"]["uncertainty"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let o_ai = ai["woe"]["opinions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|o| o["attr"] == "gpa")
        .unwrap()["contribution"]
        .as_f64()
        .unwrap();
    let uri = format!("/sessions/{id}/messages");
    call(&app, Method::POST, &uri, Some(json!({ "choose_dimension": "gpa" }))).await;
    let (status, step) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({ "text": "A GPA like this shows steady work because grades were earned over four years." })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{step}");
    let change = &step["opinion_change"];
    assert_eq!(change["attr"], "gpa");
    assert_eq!(change["old"].as_f64().unwrap(), o_ai);
    assert_eq!(change["s_human"].as_f64().unwrap(), 1.0);
    let expected = (0.5 * o_ai + ops["gpa"]) / 1.5;
    assert!((change["new"].as_f64().unwrap() - expected).abs() < 1e-9);
    let ai = &step["session"]["ai"];
    let sum: f64 = ai["woe"]["opinions"].as_array().unwrap().iter().map(|o| o["contribution"].as_f64().unwrap()).sum();
    let overall = (ai["woe"]["base"].as_f64().unwrap() + sum).clamp(0.0, 100.0);
    assert!((ai["overall"].as_f64().unwrap() - overall).abs() < 1e-9);
}

struct Failing;

impl LlmAdapter for Failing {
    fn complete(&self, _: &RegulatedPrompt) -> Result<String, AdapterError> {
        Err(AdapterError::Config("no endpoint".into()))
    }
}

#[tokio::test]
async fn adapter_failure_is_bad_gateway_and_keeps_phase() {
    let (app, case) = app_with(|m, _| m, Arc::new(Failing), Arc::new(MemoryStore::new()));
    let ops = opinions_against_gpa(&app, &case).await;
    let id = create(&app, &case).await;
    call(&app, Method::POST, &format!("/sessions/{id}/opinions"), Some(json!(ops))).await;
    let uri = format!("/sessions/{id}/messages");
    let (_, step) = call(&app, Method::POST, &uri, Some(json!({ "quick_option": "continue" }))).await;
    assert_eq!(step["phase"], "human_turn");
    let (_, before) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    let (status, body) = call(&app, Method::POST, &uri, Some(json!({ "text": "Why is that?" }))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_error(&body, "llm_failure");
    assert_eq!(body["phase"], "human_turn");
    let (_, after) = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn restart_rebuilds_identical_state_from_logs() {
    let dir = tempfile::tempdir().unwrap();
    let store = || -> Arc<dyn SessionStore> { Arc::new(JsonlStore::open(dir.path()).unwrap()) };
    let (app, case) = app_with(|m, _| m, Arc::new(MockAdapter::new(5)), store());
    let ops = opinions_against_gpa(&app, &case).await;
    let id = create(&app, &case).await;
    call(&app, Method::POST, &format!("/sessions/{id}/opinions"), Some(json!(ops))).await;
    let uri = format!("/sessions/{id}/messages");
    call(&app, Method::POST, &uri, Some(json!({ "choose_dimension": "gpa" }))).await;
    call(&app, Method::POST, &uri, Some(json!({ "text": "Strong grades matter because they predict success." }))).await;
    call(&app, Method::POST, &uri, Some(json!({ "quick_option": "maintain" }))).await;
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/decision"), Some(json!({ "decision": "accept" }))).await;
    assert_eq!(status, StatusCode::OK);
    let (_, view) = call_raw(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    let (_, transcript) = call_raw(&app, Method::GET, &format!("/sessions/{id}/transcript"), None).await;

    let (restarted, _) = app_with(|m, _| m, Arc::new(MockAdapter::new(5)), store());
    let (_, view2) = call_raw(&restarted, Method::GET, &format!("/sessions/{id}"), None).await;
    let (_, transcript2) = call_raw(&restarted, Method::GET, &format!("/sessions/{id}/transcript"), None).await;
    assert_eq!(view, view2);
    assert_eq!(transcript, transcript2);

    let (status, csv) = call_raw(&restarted, Method::GET, "/reports/reliance", None).await;
    assert_eq!(status, StatusCode::OK);
    let csv = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("participant,n,accuracy"));
    assert!(lines[1].starts_with("service,1,"), "{csv}");
}

#[tokio::test]
async fn reliance_report_needs_decisions() {
    let (app, _) = app();
    let (status, body) = call(&app, Method::GET, "/reports/reliance", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "no_decisions");
}

#[tokio::test]
async fn concurrent_sessions_proceed_independently() {
    let (app, case) = app();
    let zeros: BTreeMap<String, f64> = Schema::admissions().names().map(|n| (n.to_string(), 0.0)).collect();
    let mut tasks = Vec::new();
    for _ in 0..8 {
        let app = app.clone();
        let case = case.clone();
        let zeros = zeros.clone();
        tasks.push(tokio::spawn(async move {
            let id = create(&app, &case).await;
            let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/opinions"), Some(json!(zeros))).await;
            assert_eq!(status, StatusCode::OK);
            let (status, step) =
                call(&app, Method::POST, &format!("/sessions/{id}/decision"), Some(json!({ "decision": "reject" }))).await;
            assert_eq!(status, StatusCode::OK, "{step}");
            id
        }));
    }
    let mut ids = Vec::new();
    for t in tasks {
        ids.push(t.await.unwrap());
    }
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 8);
    let (status, csv) = call_raw(&app, Method::GET, "/reports/reliance", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(csv).unwrap().contains("service,8,"));
}
