mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::{golden_json, FixtureArtifacts};
use musical_moments::models::load_model;
use musical_moments::pipeline::run_pipeline;
use musical_moments::service::{router, AppState, Artifacts, FeedbackEvent};

struct Harness {
    app: Router,
    artifacts: FixtureArtifacts,
    log: std::path::PathBuf,
}

fn loaded() -> Harness {
    let artifacts = FixtureArtifacts::build();
    let loaded = Artifacts::load(&artifacts.model_path(), &artifacts.dataset_dir(), None).unwrap();
    let log = artifacts.dir.path().join("feedback.jsonl");
    let state = AppState::new(Some(loaded), &log).unwrap().with_hour_source(|| 19);
    Harness { app: router(Arc::new(state), None), artifacts, log }
}

fn empty() -> (Router, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::new(None, dir.path().join("feedback.jsonl")).unwrap();
    (router(Arc::new(state), None), dir)
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, body: String) -> (StatusCode, Value) {
    let req = Request::post("/api/feedback")
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    call(app, req).await
}

#[tokio::test]
async fn recommendations_match_golden() {
    let h = loaded();
    let (status, body) = get(&h.app, "/api/recommendations?hour=19&k=20&epsilon=0.3").await;
    assert_eq!(status, StatusCode::OK);
    golden_json("recommendations_hour19.json", &body).unwrap();

    let (_, clock) = get(&h.app, "/api/recommendations?k=20&epsilon=0.3").await;
    assert_eq!(clock, body);

    let (status, body) = get(&h.app, "/api/profile/19").await;
    assert_eq!(status, StatusCode::OK);
    golden_json("profile_hour19.json", &body).unwrap();
}

#[tokio::test]
async fn recommendations_agree_with_the_library() {
    let h = loaded();
    let a = Artifacts::load(&h.artifacts.model_path(), &h.artifacts.dataset_dir(), None).unwrap();
    for (hour, k, eps) in [(0, 1, 0.0), (7, 5, 1.0), (19, 20, 0.5), (23, 100, 0.25)] {
        let expected = run_pipeline(&a.dataset, &a.model, &a.library, hour, k, eps).unwrap();
        let uri = format!("/api/recommendations?hour={hour}&k={k}&epsilon={eps}");
        let (status, body) = get(&h.app, &uri).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body, serde_json::to_value(&expected).unwrap(), "{uri}");
    }
}

#[tokio::test]
async fn invalid_parameters_are_rejected() {
    let h = loaded();
    for uri in [
        "/api/recommendations?hour=24",
        "/api/recommendations?hour=-1",
        "/api/recommendations?hour=noon",
        "/api/recommendations?k=0",
        "/api/recommendations?k=1.5",
        "/api/recommendations?epsilon=1.5",
        "/api/recommendations?epsilon=-0.1",
        "/api/recommendations?limit=3",
        "/api/profile/24",
        "/api/profile/-1",
        "/api/profile/x",
    ] {
        let (status, body) = get(&h.app, uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert_eq!(body["error"], "invalid_parameter", "{uri}");
        assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
    let (_, body) = get(&h.app, "/api/recommendations?hour=24").await;
    assert_eq!(body["parameter"], "hour");
}

#[tokio::test]
async fn unloaded_service_answers_503() {
    let (app, _dir) = empty();
    for uri in ["/api/recommendations?hour=3", "/api/profile/3"] {
        let (status, body) = get(&app, uri).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert_eq!(body["error"], "not_loaded");
    }
    let (status, body) = get(&app, "/api/health").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["status"], "not_loaded");
    assert_eq!(body["model_rmse"], Value::Null);
}

#[tokio::test]
async fn health_reports_the_loaded_model() {
    let h = loaded();
    let model = load_model(h.artifacts.model_path()).unwrap();
    let (status, body) = get(&h.app, "/api/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["model_kind"], "gbt");
    assert_eq!(body["model_rmse"].as_f64().unwrap(), model.train_rmse);
    assert!(body["dataset_moments"].as_u64().unwrap() > 0);
}

#[tokio::test]
async fn feedback_appends_one_line_per_event() {
    let h = loaded();
    for i in 0..100 {
        let action = if i % 3 == 0 { "skipped" } else { "listened" };
        let mut body = json!({"session_id": "s1", "track_key": format!("track {i}"), "action": action});
        if i % 2 == 0 {
            body["epsilon"] = json!(0.25);
        }
        let (status, _) = post(&h.app, body.to_string()).await;
        assert_eq!(status, StatusCode::NO_CONTENT);
    }
    let text = std::fs::read_to_string(&h.log).unwrap();
    let events: Vec<FeedbackEvent> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(events.len(), 100);
    for (i, e) in events.iter().enumerate() {
        assert_eq!(e.track_key, format!("track {i}"));
        assert_eq!(e.epsilon_at_time, (i % 2 == 0).then_some(0.25));
    }
    assert!(events.windows(2).all(|w| w[0].at <= w[1].at));
}

#[tokio::test]
async fn malformed_feedback_is_rejected() {
    let h = loaded();
    for (body, error) in [
        (json!({"session_id": "s", "track_key": "t", "action": "liked"}).to_string(), "invalid_body"),
        (json!({"session_id": "s", "track_key": "t"}).to_string(), "invalid_body"),
        (
            json!({"session_id": "s", "track_key": "t", "action": "listened", "extra": 1}).to_string(),
            "invalid_body",
        ),
        ("not json".to_owned(), "invalid_body"),
        (json!({"session_id": "", "track_key": "t", "action": "listened"}).to_string(), "invalid_parameter"),
        (json!({"session_id": "s", "track_key": " ", "action": "listened"}).to_string(), "invalid_parameter"),
        (
            json!({"session_id": "s", "track_key": "t", "action": "listened", "epsilon": 2}).to_string(),
            "invalid_parameter",
        ),
    ] {
        let (status, resp) = post(&h.app, body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(resp["error"], error, "{body}");
    }
    assert_eq!(std::fs::read_to_string(&h.log).unwrap_or_default(), "");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_match_sequential_answers() {
    let h = loaded();
    let uris: Vec<String> = (0..96)
        .map(|i| {
            format!("/api/recommendations?hour={}&k={}&epsilon={}", i % 24, 1 + i % 7, (i % 5) as f64 / 4.0)
        })
        .collect();
    let mut expected = Vec::new();
    for uri in &uris {
        expected.push(get(&h.app, uri).await);
    }
    let mut tasks = Vec::new();
    for (i, uri) in uris.iter().enumerate() {
        let app = h.app.clone();
        let uri = uri.clone();
        tasks.push(tokio::spawn(async move {
            let fb = json!({"session_id": format!("c{i}"), "track_key": "t", "action": "listened"});
            let (fs, _) = post(&app, fb.to_string()).await;
            assert_eq!(fs, StatusCode::NO_CONTENT);
            get(&app, &uri).await
        }));
    }
    for (task, want) in tasks.into_iter().zip(expected) {
        assert_eq!(task.await.unwrap(), want);
    }
    let text = std::fs::read_to_string(&h.log).unwrap();
    let mut sessions: Vec<String> =
        text.lines().map(|l| serde_json::from_str::<FeedbackEvent>(l).unwrap().session_id).collect();
    sessions.sort();
    let mut want: Vec<String> = (0..96).map(|i| format!("c{i}")).collect();
    want.sort();
    assert_eq!(sessions, want);
}
