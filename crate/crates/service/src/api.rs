use crate::store::{SessionStore, StoreError};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use protoagent_agent::{approve, Agent, AgentError, ProposalStatus, RequestInput, SubRequest};
use protoagent_core::protocol::render_simplified_tree;
use protoagent_core::serialize_protocol;
use protoagent_llm::LlmError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Allowed browser origin for the review UI; any origin when unset.
    pub cors_origin: Option<String>,
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub agent: Arc<Agent>,
    locks: Arc<Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>>,
}

impl AppState {
    pub fn new(store: SessionStore, agent: Agent) -> Self {
        Self {
            store: Arc::new(store),
            agent: Arc::new(agent),
            locks: Arc::default(),
        }
    }

    fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table poisoned")
            .entry(id.to_string())
            .or_default()
            .clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    fn busy() -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "SESSION_BUSY",
            "another request is in progress for this session",
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "detail": self.detail });
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::InvalidProtocol(report) => {
                Self::new(StatusCode::BAD_REQUEST, "INVALID_PROTOCOL", message)
                    .detail(json!(report))
            }
            StoreError::UnknownSession(_) => {
                Self::new(StatusCode::NOT_FOUND, "UNKNOWN_SESSION", message)
            }
            StoreError::UnknownProposal(_) => {
                Self::new(StatusCode::NOT_FOUND, "UNKNOWN_PROPOSAL", message)
            }
            StoreError::NotPending { status, .. } => {
                Self::new(StatusCode::CONFLICT, "INVALID_STATUS", message)
                    .detail(json!({ "status": status }))
            }
            StoreError::Corrupt { .. } => Self::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "CORRUPT_SESSION",
                message,
            ),
            StoreError::InjectedFault | StoreError::Io { .. } => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "STORAGE", message)
            }
        }
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        let code = e.code();
        let message = e.to_string();
        match e {
            AgentError::Llm(LlmError::RateLimited { retry_after_secs }) => Self::new(StatusCode::BAD_GATEWAY, code, message)
                .detail(json!({ "retry_after_secs": retry_after_secs, "hint": "retry after the indicated delay" })),
            AgentError::Llm(_) | AgentError::MalformedRouterOutput(_) => {
                Self::new(StatusCode::BAD_GATEWAY, code, message).detail(json!({ "hint": "the model backend failed; retry the request" }))
            }
            AgentError::JsonSchema { ref pointer, .. } => {
                let pointer = pointer.clone();
                Self::new(StatusCode::BAD_REQUEST, code, message).detail(json!({ "pointer": pointer }))
            }
            AgentError::EmptyRequest => Self::new(StatusCode::BAD_REQUEST, code, message),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, code, message),
        }
    }
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string())
}

pub fn router(state: AppState, config: &ServiceConfig) -> Router {
    let cors = match &config.cors_origin {
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => CorsLayer::new().allow_origin(AllowOrigin::exact(v)),
            Err(_) => CorsLayer::new(),
        },
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/:id/requests", post(submit_request))
        .route("/sessions/:id/proposals", get(list_proposals))
        .route("/sessions/:id/proposals/:pid/decision", post(decide))
        .route("/sessions/:id/protocol", get(get_protocol))
        .route("/sessions/:id/history", get(get_history))
        .route("/sessions/:id/tree", get(get_tree))
        .layer(cors)
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Serialize)]
struct Created {
    id: String,
    tree: String,
    protocol_hash: String,
}

async fn create_session(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let xml = String::from_utf8(body.to_vec()).map_err(|_| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "INVALID_PROTOCOL",
            "body is not UTF-8",
        )
    })?;
    let store = state.store.clone();
    let session = tokio::task::spawn_blocking(move || store.create(&xml))
        .await
        .map_err(join_error)??;
    Ok((
        StatusCode::CREATED,
        Json(Created {
            id: session.meta.id,
            tree: render_simplified_tree(&session.protocol).to_string(),
            protocol_hash: session.protocol.content_hash(),
        }),
    ))
}

#[derive(Serialize)]
struct NotDispatchable {
    #[serde(flatten)]
    subrequest: SubRequest,
    status: &'static str,
    explanation: &'static str,
}

/// `{"text": "..."}` is natural language; any other JSON body is a
/// structured request (object or array).
fn request_input(body: &[u8]) -> Result<RequestInput, ApiError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "INVALID_BODY",
            format!("body is not JSON: {e}"),
        )
    })?;
    if let Some(obj) = value.as_object() {
        if obj.len() == 1 {
            if let Some(text) = obj.get("text") {
                let text = text.as_str().ok_or_else(|| {
                    ApiError::new(
                        StatusCode::BAD_REQUEST,
                        "INVALID_BODY",
                        "'text' must be a string",
                    )
                })?;
                return Ok(RequestInput::Text(text.to_string()));
            }
        }
    }
    Ok(RequestInput::Structured(value.to_string()))
}

async fn submit_request(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let input = request_input(&body)?;
    let lock = state.lock_for(&id);
    let _guard = lock.try_lock().map_err(|_| ApiError::busy())?;
    let st = state.clone();
    let result = tokio::task::spawn_blocking(move || -> Result<Value, ApiError> {
        let session = st.store.load(&id)?;
        let first_id = session.proposals.len() + 1;
        let dispatch = st.agent.submit(&session.protocol, &input, first_id)?;
        st.store.record_dispatch(&id, &input, &dispatch)?;
        let others: Vec<NotDispatchable> = dispatch
            .not_dispatchable
            .into_iter()
            .map(|subrequest| NotDispatchable {
                subrequest,
                status: "NotDispatchable",
                explanation: "not a protocol edit; nothing will be executed",
            })
            .collect();
        Ok(json!({ "proposals": dispatch.proposals, "not_dispatchable": others }))
    })
    .await
    .map_err(join_error)??;
    Ok(Json(result))
}

async fn list_proposals(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let session = state.store.load(&id)?;
    Ok(Json(json!(session.proposals)))
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum Decision {
    Approve,
    Reject,
}

#[derive(Deserialize)]
struct DecisionBody {
    decision: Decision,
}

async fn decide(
    State(state): State<AppState>,
    Path((id, pid)): Path<(String, String)>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let DecisionBody { decision } = serde_json::from_slice(&body).map_err(|e| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "INVALID_BODY",
            format!("expected {{\"decision\": \"approve\" | \"reject\"}}: {e}"),
        )
    })?;
    let lock = state.lock_for(&id);
    let _guard = lock.try_lock().map_err(|_| ApiError::busy())?;
    let st = state.clone();
    tokio::task::spawn_blocking(move || -> Result<Json<Value>, ApiError> {
        let session = st.store.load(&id)?;
        let proposal = session
            .proposal(&pid)
            .ok_or_else(|| StoreError::UnknownProposal(pid.clone()))?;
        if proposal.status != ProposalStatus::Pending {
            return Err(StoreError::NotPending {
                id: pid,
                status: proposal.status,
            }
            .into());
        }
        let after = match decision {
            Decision::Reject => st.store.reject(&id, &pid)?,
            Decision::Approve => {
                let mut p = proposal.clone();
                let outcome = approve(&mut p, &session.protocol, &st.agent.toolset);
                st.store
                    .record_execution(&id, &pid, outcome.as_ref().map_err(Clone::clone))?
            }
        };
        let updated = after.proposal(&pid).expect("proposal still present");
        Ok(Json(json!(updated)))
    })
    .await
    .map_err(join_error)?
}

async fn get_protocol(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = state.store.load(&id)?;
    let xml = serialize_protocol(&session.protocol);
    let etag = format!("\"{}\"", session.protocol.content_hash());
    Ok((
        [
            (header::CONTENT_TYPE, "application/xml".to_string()),
            (header::ETAG, etag),
        ],
        xml,
    )
        .into_response())
}

async fn get_history(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    Ok(Json(json!(state.store.load(&id)?.history)))
}

async fn get_tree(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let session = state.store.load(&id)?;
    Ok(Json(
        json!({ "tree": render_simplified_tree(&session.protocol).to_string() }),
    ))
}
