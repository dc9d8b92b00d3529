//! HTTP interface driven in-process through the router.

mod common;

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use coughscreen::records::{JsonlStore, RecordStore, LOG_NAME};
use coughscreen::service::{router, AppState};
use coughscreen_core::corpus::{synth_clip, SynthClass};
use coughscreen_core::AudioClip;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use common::{toy_engine, wav_bytes, Detector};

const LIMIT: usize = 1 << 20;

fn app(detector: Option<Detector>, store_dir: &Path) -> Router {
    let store: Arc<dyn RecordStore> = Arc::new(JsonlStore::open(store_dir, 4).unwrap());
    let state = AppState {
        engine: detector.map(|d| Arc::new(toy_engine(d, 21))),
        store,
        payload_limit: LIMIT,
        research_audio_dir: None,
    };
    router(state, "*")
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

fn post(uri: &str, body: Vec<u8>) -> Request<Body> {
    Request::post(uri).header("content-type", "audio/wav").body(Body::from(body)).unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn cough(i: u64) -> Vec<u8> {
    wav_bytes(&synth_clip(SynthClass::Covid19, 2, i))
}

fn multipart(parts: &[Vec<u8>]) -> Request<Body> {
    let boundary = "XbOuNdArYx";
    let mut body = Vec::new();
    for (i, p) in parts.iter().enumerate() {
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"clip{i}\"; filename=\"c{i}.wav\"\r\nContent-Type: audio/wav\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(p);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    Request::post("/v1/screen/session")
        .header("content-type", format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap()
}

#[tokio::test]
async fn screen_returns_a_result_and_persists_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Some(Detector::AcceptAll), dir.path());
    let (status, body) = send(&app, post("/v1/screen", cough(0))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let result = body["result"].as_str().unwrap();
    assert!(["covid_likely", "covid_not_likely", "inconclusive"].contains(&result));
    assert_eq!(body["prompt_rerecord"], false);
    let id = body["record_id"].as_str().unwrap().to_string();
    assert!(body["classifiers"]["dtl_mc"].is_object());

    let (status, page) = send(&app, get("/v1/records")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["total"], 1);
    assert_eq!(page["records"][0]["record_id"], id.as_str());
    assert_eq!(page["records"][0]["result"], result);
}

#[tokio::test]
async fn non_cough_yields_prompt_and_no_record() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Some(Detector::RejectAll), dir.path());
    let (status, body) = send(&app, post("/v1/screen", cough(1))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["result"], "not_a_cough");
    assert_eq!(body["prompt_rerecord"], true);
    assert!(body["record_id"].is_null());
    assert!(body["classifiers"].is_null());
    let (_, page) = send(&app, get("/v1/records")).await;
    assert_eq!(page["total"], 0);
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Some(Detector::AcceptAll), dir.path());

    let (status, body) = send(&app, post("/v1/screen", Vec::new())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "malformed_audio");

    let (status, body) = send(&app, post("/v1/screen", b"RIFF-but-not-really".to_vec())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "malformed_audio");

    let (status, _) = send(&app, post("/v1/screen", vec![0u8; LIMIT + 1])).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);

    let short = AudioClip::new(vec![0.1; 4410], 44_100).unwrap();
    let (status, body) = send(&app, post("/v1/screen", wav_bytes(&short))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "validation_failed");

    let silent = AudioClip::new(vec![0.0; 132_300], 44_100).unwrap();
    let (status, _) = send(&app, post("/v1/screen", wav_bytes(&silent))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let req = Request::post("/v1/screen").header("x-coarse-lat", "12.3").body(Body::from(cough(2))).unwrap();
    let (status, _) = send(&app, req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = send(&app, get("/v1/records?from=yesterday")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (_, page) = send(&app, get("/v1/records")).await;
    assert_eq!(page["total"], 0, "failed requests must not leave records");
}

#[tokio::test]
async fn missing_models_are_reported_as_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(None, dir.path());
    let (status, body) = send(&app, post("/v1/screen", cough(0))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"], "models_not_loaded");
    let (status, body) = send(&app, get("/v1/health")).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["status"], "models_not_loaded");
}

#[tokio::test]
async fn health_reports_versions() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Some(Detector::Random), dir.path());
    let (status, body) = send(&app, get("/v1/health")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    for k in ["detector", "dtl_mc", "dtl_bc", "cml_mc"] {
        assert_eq!(body["versions"][k].as_str().unwrap().len(), 12);
    }
}

#[tokio::test]
async fn records_hold_no_audio_or_identity_and_round_location() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Some(Detector::AcceptAll), dir.path());
    let req = Request::post("/v1/screen")
        .header("x-coarse-lat", "51.50735")
        .header("x-coarse-lon", "-0.12776")
        .header("x-forwarded-for", "203.0.113.9")
        .header("user-agent", "probe/1.0")
        .body(Body::from(cough(3)))
        .unwrap();
    let (status, _) = send(&app, req).await;
    assert_eq!(status, StatusCode::OK);

    let line = std::fs::read_to_string(dir.path().join(LOG_NAME)).unwrap();
    let record: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    let keys: Vec<&str> = record.as_object().unwrap().keys().map(String::as_str).collect();
    let allowed = [
        "record_id",
        "timestamp",
        "coarse_location",
        "detection",
        "classifiers",
        "result",
        "model_versions",
        "session_id",
    ];
    assert!(keys.iter().all(|k| allowed.contains(k)), "unexpected field in {keys:?}");
    assert_eq!(record["coarse_location"]["lat"], 51.5);
    assert_eq!(record["coarse_location"]["lon"], -0.1);
    for needle in ["203.0.113.9", "probe/1.0", "RIFF", "samples"] {
        assert!(!line.contains(needle), "record leaks {needle}");
    }
}

#[tokio::test]
async fn time_filter_and_paging() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Some(Detector::AcceptAll), dir.path());
    let before = chrono::Utc::now();
    for i in 0..6 {
        let (status, _) = send(&app, post("/v1/screen", cough(10 + i))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let after = chrono::Utc::now();
    let (_, page) = send(&app, get("/v1/records?per_page=4")).await;
    assert_eq!(page["total"], 6);
    assert_eq!(page["records"].as_array().unwrap().len(), 4);
    let (_, page2) = send(&app, get("/v1/records?per_page=4&page=1")).await;
    assert_eq!(page2["records"].as_array().unwrap().len(), 2);
    let stamps: Vec<&str> =
        page["records"].as_array().unwrap().iter().map(|r| r["timestamp"].as_str().unwrap()).collect();
    assert!(stamps.windows(2).all(|w| w[0] >= w[1]), "newest first");

    let enc =
        |t: chrono::DateTime<chrono::Utc>| t.to_rfc3339_opts(chrono::SecondsFormat::Micros, true).replace('+', "%2B");
    let (_, none) = send(&app, get(&format!("/v1/records?to={}", enc(before - chrono::Duration::seconds(1))))).await;
    assert_eq!(none["total"], 0);
    let (_, all) = send(&app, get(&format!("/v1/records?from={}&to={}", enc(before), enc(after)))).await;
    assert_eq!(all["total"], 6);
}

#[tokio::test]
async fn records_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let mut ids = Vec::new();
    {
        let app = app(Some(Detector::AcceptAll), dir.path());
        for i in 0..5 {
            let (_, body) = send(&app, post("/v1/screen", cough(20 + i))).await;
            ids.push(body["record_id"].as_str().unwrap().to_string());
        }
    }
    let app = app(Some(Detector::AcceptAll), dir.path());
    let (_, page) = send(&app, get("/v1/records?per_page=10")).await;
    assert_eq!(page["total"], 5);
    let mut listed: Vec<String> =
        page["records"].as_array().unwrap().iter().map(|r| r["record_id"].as_str().unwrap().to_string()).collect();
    listed.sort();
    ids.sort();
    assert_eq!(listed, ids);
}

#[tokio::test]
async fn session_votes_over_valid_coughs() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Some(Detector::AcceptAll), dir.path());
    let short = wav_bytes(&AudioClip::new(vec![0.1; 2205], 44_100).unwrap());
    let parts = vec![cough(30), cough(31), short, cough(32)];
    let (status, body) = send(&app, multipart(&parts)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["valid_coughs"], 3);
    assert_eq!(body["clips"].as_array().unwrap().len(), 3);
    let session = body["record_id"].as_str().unwrap();
    let (_, page) = send(&app, get("/v1/records")).await;
    assert_eq!(page["total"], 3);
    assert!(page["records"].as_array().unwrap().iter().all(|r| r["session_id"] == session));

    let (status, body) = send(&app, multipart(&parts[..2])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["valid_coughs"], 2);
}

#[tokio::test]
async fn session_with_only_rejected_clips_is_insufficient() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Some(Detector::RejectAll), dir.path());
    let (status, body) = send(&app, multipart(&[cough(40), cough(41), cough(42)])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "insufficient_valid_coughs");
    let (_, page) = send(&app, get("/v1/records")).await;
    assert_eq!(page["total"], 0);
}
