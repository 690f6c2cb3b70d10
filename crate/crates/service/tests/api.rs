mod common;

use axum::http::StatusCode;
use common::*;
use protoagent_core::{parse_protocol, serialize_protocol};
use protoagent_llm::{ChatBackend, ChatMessage, ChatParams, LlmError, ScriptedBackend, ToolSchema};
use serde_json::json;
use std::sync::Arc;
use std::time::Duration;

fn canonical_thorax() -> String {
    serialize_protocol(&parse_protocol(THORAX).unwrap())
}

#[tokio::test]
async fn health_and_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path(), Arc::new(ScriptedBackend::new(vec![])));
    assert_eq!(
        call(&app, "GET", "/health", "").await.status,
        StatusCode::OK
    );

    let a = create(&app).await;
    let b = create(&app).await;
    assert_ne!(a, b);

    let r = call(&app, "POST", "/sessions", "<ScanProtocol id=\"x\"").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let body = r.json();
    assert_eq!(body["code"], "INVALID_PROTOCOL");
    assert!(!body["detail"]["issues"].as_array().unwrap().is_empty());

    let proto = call(&app, "GET", &format!("/sessions/{a}/protocol"), "").await;
    assert_eq!(proto.text, canonical_thorax());
    let etag = proto.headers["etag"].to_str().unwrap().to_string();
    assert_eq!(
        etag,
        format!("\"{}\"", parse_protocol(THORAX).unwrap().content_hash())
    );
    let history = call(&app, "GET", &format!("/sessions/{a}/history"), "").await;
    assert_eq!(history.json(), json!([]));
    assert!(call(&app, "GET", &format!("/sessions/{a}/tree"), "")
        .await
        .json()["tree"]
        .as_str()
        .unwrap()
        .starts_with("ScanProtocol | Adult Thorax | adult-thorax"));
}

#[tokio::test]
async fn unknown_session_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path(), Arc::new(ScriptedBackend::new(vec![])));
    for (m, uri, body) in [
        ("POST", "/sessions/nope/requests", r#"{"text":"x"}"#),
        ("GET", "/sessions/nope/protocol", ""),
        ("GET", "/sessions/nope/history", ""),
        ("GET", "/sessions/../etc/proposals", ""),
    ] {
        let r = call(&app, m, uri, body).await;
        assert!(r.status == StatusCode::NOT_FOUND, "{uri}: {}", r.status);
    }
}

#[tokio::test]
async fn lungcad_submit_and_approve() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path(), scenario_backend("lungcad"));
    let id = create(&app).await;
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/requests"),
        json!({"text": scenario_request("lungcad")}).to_string(),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    let proposals = r.json()["proposals"].clone();
    assert_eq!(proposals.as_array().unwrap().len(), 1);
    assert_eq!(proposals[0]["status"], "Pending");
    assert_eq!(proposals[0]["subrequest"]["category"], "Deleting");
    let pid = proposals[0]["id"].as_str().unwrap();

    let before = call(&app, "GET", &format!("/sessions/{id}/protocol"), "")
        .await
        .text;
    let d = call(
        &app,
        "POST",
        &format!("/sessions/{id}/proposals/{pid}/decision"),
        r#"{"decision":"approve"}"#,
    )
    .await;
    assert_eq!(d.status, StatusCode::OK, "{}", d.text);
    assert_eq!(d.json()["status"], "Applied");
    let after = call(&app, "GET", &format!("/sessions/{id}/protocol"), "")
        .await
        .text;
    assert!(before.contains("recon-cad") && !after.contains("recon-cad"));
    assert!(!after.contains("recon-lungcad"));

    let history = call(&app, "GET", &format!("/sessions/{id}/history"), "")
        .await
        .json();
    let kinds: Vec<&str> = history
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["event"].as_str().unwrap())
        .collect();
    assert_eq!(
        kinds,
        vec!["RequestSubmitted", "ProposalCreated", "Applied"]
    );
    let applied = &history[2];
    assert_eq!(
        applied["before_hash"],
        parse_protocol(&before).unwrap().content_hash()
    );
    assert_eq!(
        applied["after_hash"],
        parse_protocol(&after).unwrap().content_hash()
    );

    let again = call(
        &app,
        "POST",
        &format!("/sessions/{id}/proposals/{pid}/decision"),
        r#"{"decision":"approve"}"#,
    )
    .await;
    assert_eq!(again.status, StatusCode::CONFLICT);
    assert_eq!(again.json()["code"], "INVALID_STATUS");
}

#[tokio::test]
async fn reject_leaves_protocol_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path(), scenario_backend("lungcad"));
    let id = create(&app).await;
    call(
        &app,
        "POST",
        &format!("/sessions/{id}/requests"),
        json!({"text": scenario_request("lungcad")}).to_string(),
    )
    .await;
    let before = call(&app, "GET", &format!("/sessions/{id}/protocol"), "").await;
    let d = call(
        &app,
        "POST",
        &format!("/sessions/{id}/proposals/p-1/decision"),
        r#"{"decision":"reject"}"#,
    )
    .await;
    assert_eq!(d.json()["status"], "Rejected");
    let after = call(&app, "GET", &format!("/sessions/{id}/protocol"), "").await;
    assert_eq!(before.text, after.text);
    assert_eq!(before.headers["etag"], after.headers["etag"]);
    let history = call(&app, "GET", &format!("/sessions/{id}/history"), "")
        .await
        .json();
    assert_eq!(
        history.as_array().unwrap().last().unwrap()["event"],
        "Rejected"
    );
    let bad = call(
        &app,
        "POST",
        &format!("/sessions/{id}/proposals/p-1/decision"),
        r#"{"decision":"maybe"}"#,
    )
    .await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    let missing = call(
        &app,
        "POST",
        &format!("/sessions/{id}/proposals/p-9/decision"),
        r#"{"decision":"reject"}"#,
    )
    .await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn structured_request_uses_no_backend() {
    let dir = tempfile::tempdir().unwrap();
    let backend = Arc::new(ScriptedBackend::new(vec![]));
    let (app, _) = app(dir.path(), backend.clone());
    let id = create(&app).await;
    let body = json!({"operation": "modify", "target": {"entity_type": "FrameOfReferenceEntity"},
        "changes": [{"essential": "PatientPositionEssential", "value": {"type": "EnumToken", "payload": "FaceUpFeetFirst"}}]});
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/requests"),
        body.to_string(),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    assert_eq!(
        r.json()["proposals"][0]["subrequest"]["category"],
        "Modification"
    );
    assert_eq!(r.json()["proposals"][0]["status"], "Pending");
    assert_eq!(backend.calls(), 0);

    // The edit changes exactly one line of the canonical XML.
    let before = call(&app, "GET", &format!("/sessions/{id}/protocol"), "")
        .await
        .text;
    call(
        &app,
        "POST",
        &format!("/sessions/{id}/proposals/p-1/decision"),
        r#"{"decision":"approve"}"#,
    )
    .await;
    let after = call(&app, "GET", &format!("/sessions/{id}/protocol"), "")
        .await
        .text;
    let diff: Vec<(&str, &str)> = before
        .lines()
        .zip(after.lines())
        .filter(|(a, b)| a != b)
        .collect();
    assert_eq!(before.lines().count(), after.lines().count());
    assert_eq!(
        diff,
        vec![(
            "      <Value type=\"EnumToken\">FaceUpHeadFirst</Value>",
            "      <Value type=\"EnumToken\">FaceUpFeetFirst</Value>"
        )]
    );

    let bad = call(
        &app,
        "POST",
        &format!("/sessions/{id}/requests"),
        r#"{"operation":"modify"}"#,
    )
    .await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    assert_eq!(bad.json()["detail"]["pointer"], "/changes");
}

#[tokio::test]
async fn backend_failure_is_502() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path(), Arc::new(ScriptedBackend::new(vec![])));
    let id = create(&app).await;
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/requests"),
        r#"{"text":"delete the lung cad"}"#,
    )
    .await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
    assert_eq!(r.json()["code"], "SCRIPT_MISS");
    assert!(r.json()["detail"]["hint"].is_string());
    let proposals = call(&app, "GET", &format!("/sessions/{id}/proposals"), "")
        .await
        .json();
    assert_eq!(proposals, json!([]));
}

#[tokio::test]
async fn others_are_reported_not_dispatched() {
    let dir = tempfile::tempdir().unwrap();
    let reply = ChatMessage::assistant(
        json!({"sub_requests": [{"text": "what is Br40?", "category": "Others", "rationale": "question"}]}).to_string(),
    );
    let backend = Arc::new(ScriptedBackend::new(vec![
        protoagent_llm::ScriptedExchange::ordinal(1, vec![reply]),
    ]));
    let (app, _) = app(dir.path(), backend);
    let id = create(&app).await;
    let r = call(
        &app,
        "POST",
        &format!("/sessions/{id}/requests"),
        r#"{"text":"what is Br40?"}"#,
    )
    .await
    .json();
    assert_eq!(r["proposals"], json!([]));
    assert_eq!(r["not_dispatchable"][0]["status"], "NotDispatchable");
}

/// Holds every chat call for a while so a second request can collide.
struct SlowBackend;

impl ChatBackend for SlowBackend {
    fn model_id(&self) -> &str {
        "slow"
    }

    fn chat(
        &self,
        _: &[ChatMessage],
        _: &[ToolSchema],
        _: &ChatParams,
    ) -> Result<ChatMessage, LlmError> {
        std::thread::sleep(Duration::from_millis(400));
        Err(LlmError::Backend("slow backend gives up".into()))
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn one_pipeline_per_session() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path(), Arc::new(SlowBackend));
    let busy = create(&app).await;
    let other = create(&app).await;
    let first = {
        let app = app.clone();
        let uri = format!("/sessions/{busy}/requests");
        tokio::spawn(async move { call(&app, "POST", &uri, r#"{"text":"x"}"#).await })
    };
    tokio::time::sleep(Duration::from_millis(100)).await;
    let second = call(
        &app,
        "POST",
        &format!("/sessions/{busy}/requests"),
        r#"{"text":"y"}"#,
    )
    .await;
    assert_eq!(second.status, StatusCode::CONFLICT);
    assert_eq!(second.json()["code"], "SESSION_BUSY");
    // a different session is not blocked
    let json_req = r#"{"operation":"delete","target":{"name_contains":"LungCAD"}}"#;
    let elsewhere = call(
        &app,
        "POST",
        &format!("/sessions/{other}/requests"),
        json_req,
    )
    .await;
    assert_eq!(elsewhere.status, StatusCode::OK);
    assert_eq!(first.await.unwrap().status, StatusCode::BAD_GATEWAY);
}
