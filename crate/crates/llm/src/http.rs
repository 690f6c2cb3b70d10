//! Backend for OpenAI-compatible `/chat/completions` and `/embeddings`
//! endpoints. Uses the blocking reqwest client, so construct and call it
//! outside async contexts (or from `spawn_blocking`).

use crate::{
    ChatBackend, ChatMessage, ChatParams, Embedder, EmbeddingVector, LlmError, Role, ToolSchema,
};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde_json::{json, Value};
use std::time::Duration;

pub const API_KEY_ENV: &str = "LLM_API_KEY";

pub struct HttpBackend {
    client: Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(base_url: &str, model: &str) -> Result<Self, LlmError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Backend(e.to_string()))?;
        Ok(Self {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, LlmError> {
        let mut req = self
            .client
            .post(format!("{}{path}", self.base_url))
            .json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Backend(e.to_string()))?;
        check_status(resp)?
            .json::<Value>()
            .map_err(|e| LlmError::Backend(format!("unreadable response: {e}")))
    }
}

fn check_status(resp: Response) -> Result<Response, LlmError> {
    let status = resp.status();
    if status == StatusCode::TOO_MANY_REQUESTS {
        let retry_after_secs = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok());
        return Err(LlmError::RateLimited { retry_after_secs });
    }
    if !status.is_success() {
        let body = resp.text().unwrap_or_default();
        return Err(LlmError::Backend(format!(
            "HTTP {status}: {}",
            body.chars().take(300).collect::<String>()
        )));
    }
    Ok(resp)
}

/// Wire messages. Tool calls get positional ids so each tool result can
/// refer back to the call that precedes it.
pub(crate) fn wire_messages(messages: &[ChatMessage]) -> Vec<Value> {
    let mut last_call = String::new();
    messages
        .iter()
        .enumerate()
        .map(|(i, m)| match (m.role, &m.tool_call) {
            (Role::Assistant, Some(call)) => {
                last_call = format!("call_{i}");
                json!({
                    "role": "assistant",
                    "content": Value::Null,
                    "tool_calls": [{
                        "id": last_call,
                        "type": "function",
                        "function": {"name": call.tool_name, "arguments": call.arguments_json.to_string()},
                    }],
                })
            }
            (Role::Tool, _) => json!({
                "role": "tool",
                "tool_call_id": last_call,
                "content": m.tool_result.as_ref().map(Value::to_string).unwrap_or_default(),
            }),
            (role, _) => json!({"role": role, "content": m.content}),
        })
        .collect()
}

pub(crate) fn parse_reply(body: &Value) -> Result<ChatMessage, LlmError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| LlmError::Backend("response has no choices[0].message".into()))?;
    if let Some(call) = message.pointer("/tool_calls/0/function") {
        let name = call["name"].as_str().unwrap_or_default();
        let raw = call["arguments"].as_str().unwrap_or("{}");
        let args = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        return Ok(ChatMessage::tool_call(name, args));
    }
    Ok(ChatMessage::assistant(
        message["content"].as_str().unwrap_or_default(),
    ))
}

impl ChatBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn chat(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSchema],
        params: &ChatParams,
    ) -> Result<ChatMessage, LlmError> {
        let mut body = json!({
            "model": self.model,
            "messages": wire_messages(messages),
            "temperature": params.temperature,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        if let Some(max) = params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        if !tools.is_empty() {
            body["tools"] = tools
                .iter()
                .map(|t| {
                    json!({
                        "type": "function",
                        "function": {"name": t.name, "description": t.description, "parameters": t.parameters},
                    })
                })
                .collect();
        }
        parse_reply(&self.post("/chat/completions", &body)?)
    }
}

pub struct HttpEmbedder {
    inner: HttpBackend,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: &str) -> Result<Self, LlmError> {
        Ok(Self {
            inner: HttpBackend::new(base_url, model)?,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.inner.model
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::Precondition("cannot embed empty text".into()));
        }
        let body = self.inner.post(
            "/embeddings",
            &json!({"model": self.inner.model, "input": text}),
        )?;
        let values: Vec<f64> = body
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| LlmError::Backend("response has no data[0].embedding".into()))?
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| LlmError::Backend("non-numeric embedding value".into()))
            })
            .collect::<Result<_, _>>()?;
        Ok(EmbeddingVector {
            values,
            model_id: self.inner.model.clone(),
        })
    }
}
