#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use protoagent_agent::Agent;
use protoagent_core::protocol::SyntaxOptions;
use protoagent_llm::{parse_script, ChatBackend, Gateway, ScriptedBackend};
use protoagent_service::{router, AppState, ServiceConfig, SessionStore};
use serde_json::Value;
use std::sync::Arc;
use tower::ServiceExt;

pub const THORAX: &str = include_str!("../../../../fixtures/protocols/adult_thorax.xml");

pub fn scenario_backend(name: &str) -> Arc<ScriptedBackend> {
    let path = format!(
        "{}/../../fixtures/scenarios/{name}/script.json",
        env!("CARGO_MANIFEST_DIR")
    );
    Arc::new(ScriptedBackend::new(
        parse_script(&std::fs::read_to_string(path).unwrap()).unwrap(),
    ))
}

pub fn scenario_request(name: &str) -> String {
    let path = format!(
        "{}/../../fixtures/scenarios/{name}/request.txt",
        env!("CARGO_MANIFEST_DIR")
    );
    std::fs::read_to_string(path).unwrap().trim().to_string()
}

pub fn app(root: &std::path::Path, backend: Arc<dyn ChatBackend>) -> (Router, AppState) {
    let store = SessionStore::open(root, SyntaxOptions::default()).unwrap();
    let state = AppState::new(store, Agent::new(Gateway::new(backend)));
    (router(state.clone(), &ServiceConfig::default()), state)
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: axum::http::HeaderMap,
    pub text: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("{e}: {}", self.text))
    }
}

pub async fn call(app: &Router, method: &str, uri: &str, body: impl Into<String>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(Body::from(body.into()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    Reply {
        status,
        headers,
        text: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

pub async fn create(app: &Router) -> String {
    let r = call(app, "POST", "/sessions", THORAX).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    r.json()["id"].as_str().unwrap().to_string()
}
