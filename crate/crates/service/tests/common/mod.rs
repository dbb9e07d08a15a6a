#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use guesslab::corpus::SentenceRecord;
use guesslab::Alphabet;
use guesslab_service::{router, LogStore, ManualClock, SentencePool, Service, ServiceParts, Settings};
use http_body_util::BodyExt;
use rand::Rng;
use serde_json::Value;
use tower::ServiceExt;

pub const LETTERS: &str = "АБВГҐДЕЄЖЗИІЇЙКЛМНОПРСТУФХЦЧШЩЬЮЯ";

pub fn sentence(id: &str, text: &str) -> SentenceRecord {
    SentenceRecord {
        id: id.into(),
        normalized_text: text.into(),
        raw_text: text.into(),
        length: text.chars().count(),
        source_article: "art".into(),
    }
}

/// A sentence of `len` random alphabet symbols.
pub fn random_sentence<R: Rng>(id: &str, len: usize, rng: &mut R) -> SentenceRecord {
    let symbols: Vec<char> = LETTERS.chars().chain([' ']).collect();
    let text: String = (0..len).map(|_| symbols[rng.random_range(0..symbols.len())]).collect();
    sentence(id, &text)
}

pub fn settings() -> Settings {
    Settings {
        prefix_len: 70,
        min_attempt_interval_ms: 300,
        session_ttl_secs: 24 * 3600,
        export_salt: "salt".into(),
    }
}

pub struct Harness {
    pub svc: Arc<Service>,
    pub clock: Arc<ManualClock>,
    pub app: Router,
}

pub fn start_clock() -> Arc<ManualClock> {
    Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 1, 24, 12, 0, 0).unwrap()))
}

pub fn open(
    store: Arc<dyn LogStore>,
    pool: &[SentenceRecord],
    clock: Arc<ManualClock>,
    snapshot: Option<PathBuf>,
    seed: u64,
) -> Harness {
    let svc = Arc::new(
        Service::open(ServiceParts {
            store,
            clock: clock.clone(),
            pool: SentencePool::new(pool.to_vec()),
            alphabet: Alphabet::ukrainian(),
            settings: settings(),
            snapshot,
            seed,
        })
        .unwrap(),
    );
    Harness {
        app: router(svc.clone()),
        svc,
        clock,
    }
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.body));
        })
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(serde_json::to_vec(&v).unwrap()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        headers,
        body,
    }
}

pub async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, Method::POST, uri, Some(body)).await
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None).await
}

pub async fn register(app: &Router) -> String {
    let r = post(app, "/api/participants", serde_json::json!({})).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    r.json()["participant_id"].as_str().unwrap().to_owned()
}

pub async fn start(app: &Router, participant: &str) -> Value {
    let r = post(app, "/api/sessions", serde_json::json!({ "participant_id": participant })).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    r.json()
}

pub async fn guess(app: &Router, session: &str, symbol: &str) -> Reply {
    post(
        app,
        &format!("/api/sessions/{session}/guesses"),
        serde_json::json!({ "symbol": symbol }),
    )
    .await
}
