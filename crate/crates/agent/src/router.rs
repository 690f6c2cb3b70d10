use crate::json::extract_object;
use crate::{AgentError, Origin, RequestCategory, SubRequest};
use protoagent_llm::{ChatMessage, ChatParams, Gateway};
use serde::Deserialize;

pub const ROUTER_PROMPT: &str = include_str!("../assets/router_v1.txt");

#[derive(Deserialize)]
struct RouterReply {
    sub_requests: Vec<RawSub>,
}

#[derive(Deserialize)]
struct RawSub {
    text: String,
    category: String,
    #[serde(default)]
    rationale: String,
}

fn parse_reply(content: &str) -> Result<Vec<SubRequest>, String> {
    let value = extract_object(content)?;
    let reply: RouterReply =
        serde_json::from_value(value).map_err(|e| format!("unexpected shape: {e}"))?;
    if reply.sub_requests.is_empty() {
        return Err("sub_requests is empty".into());
    }
    reply
        .sub_requests
        .into_iter()
        .map(|s| {
            if s.text.trim().is_empty() {
                return Err("a sub-request has empty text".to_string());
            }
            let category = RequestCategory::parse_label(&s.category)
                .ok_or_else(|| format!("unknown category '{}'", s.category))?;
            Ok(SubRequest {
                text: s.text.trim().to_string(),
                category,
                rationale: s.rationale,
                origin: Origin::NaturalLanguage,
                structured: None,
            })
        })
        .collect()
}

/// Splits a request into labeled sub-requests, in the order the model
/// emitted them. One corrective retry is made when the reply is unusable.
pub fn route(
    request_text: &str,
    gateway: &Gateway,
    params: &ChatParams,
) -> Result<Vec<SubRequest>, AgentError> {
    if request_text.trim().is_empty() {
        return Err(AgentError::EmptyRequest);
    }
    let mut messages = vec![
        ChatMessage::system(ROUTER_PROMPT),
        ChatMessage::user(format!("Request: {}", request_text.trim())),
    ];
    let first = gateway.chat(&messages, &[], params)?;
    let problem = match parse_reply(&first.content) {
        Ok(subs) => return Ok(subs),
        Err(p) => p,
    };
    tracing::debug!(%problem, "router reply rejected, retrying once");
    messages.push(first);
    messages.push(ChatMessage::user(format!(
        "That reply could not be used ({problem}). Answer again with only the JSON object."
    )));
    let second = gateway.chat(&messages, &[], params)?;
    parse_reply(&second.content).map_err(AgentError::MalformedRouterOutput)
}
