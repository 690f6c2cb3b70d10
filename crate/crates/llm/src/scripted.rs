//! Deterministic replay backend and the recorder that produces its scripts.
//!
//! A script is a JSON list of exchanges. Each exchange matches a call by its
//! 1-based ordinal (every call to the backend counts), by the digest of the
//! prompt, or by both. An exchange with several replies serves that many
//! consecutive matches: for an ordinal match, calls `ordinal`,
//! `ordinal + 1`, ...; for a digest-only match, successive calls carrying the
//! same digest. A call nothing matches fails with `ScriptMiss`.

use crate::{ChatBackend, ChatMessage, ChatParams, LlmError, ToolSchema};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedExchange {
    #[serde(rename = "match")]
    pub matcher: ExchangeMatch,
    pub reply: Vec<ChatMessage>,
}

impl ScriptedExchange {
    pub fn ordinal(ordinal: u32, reply: Vec<ChatMessage>) -> Self {
        Self {
            matcher: ExchangeMatch {
                ordinal: Some(ordinal),
                prompt_digest: None,
            },
            reply,
        }
    }

    pub fn digest(prompt_digest: impl Into<String>, reply: Vec<ChatMessage>) -> Self {
        Self {
            matcher: ExchangeMatch {
                ordinal: None,
                prompt_digest: Some(prompt_digest.into()),
            },
            reply,
        }
    }
}

/// sha256 over the JSON encoding of the message list.
pub fn prompt_digest(messages: &[ChatMessage]) -> String {
    let encoded = serde_json::to_vec(messages).expect("messages always encode");
    hex::encode(Sha256::digest(encoded))
}

pub fn load_script(path: &Path) -> Result<Vec<ScriptedExchange>, LlmError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LlmError::Backend(format!("cannot read script {}: {e}", path.display())))?;
    parse_script(&text)
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptedExchange>, LlmError> {
    let script: Vec<ScriptedExchange> = serde_json::from_str(text)
        .map_err(|e| LlmError::Backend(format!("invalid script: {e}")))?;
    if let Some(i) = script
        .iter()
        .position(|x| x.matcher.ordinal.is_none() && x.matcher.prompt_digest.is_none())
    {
        return Err(LlmError::Backend(format!(
            "script exchange {i} has an empty match"
        )));
    }
    Ok(script)
}

#[derive(Debug, Default)]
struct ReplayState {
    calls: u32,
    /// Per exchange, how many digest-only matches it has served.
    digest_hits: Vec<usize>,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    model_id: String,
    script: Vec<ScriptedExchange>,
    state: Mutex<ReplayState>,
}

impl ScriptedBackend {
    pub fn new(script: Vec<ScriptedExchange>) -> Self {
        let state = ReplayState {
            calls: 0,
            digest_hits: vec![0; script.len()],
        };
        Self {
            model_id: "scripted".into(),
            script,
            state: Mutex::new(state),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(load_script(path)?))
    }

    /// Number of chat calls received so far, matched or not.
    pub fn calls(&self) -> u32 {
        self.state.lock().expect("replay state").calls
    }

    fn lookup(&self, state: &mut ReplayState, ordinal: u32, digest: &str) -> Option<ChatMessage> {
        for (i, x) in self.script.iter().enumerate() {
            if let Some(d) = &x.matcher.prompt_digest {
                if d != digest {
                    continue;
                }
            }
            match x.matcher.ordinal {
                Some(start) => {
                    let Some(offset) = ordinal.checked_sub(start) else {
                        continue;
                    };
                    if let Some(reply) = x.reply.get(offset as usize) {
                        return Some(reply.clone());
                    }
                }
                None => {
                    if let Some(reply) = x.reply.get(state.digest_hits[i]) {
                        state.digest_hits[i] += 1;
                        return Some(reply.clone());
                    }
                }
            }
        }
        None
    }
}

impl ChatBackend for ScriptedBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn chat(
        &self,
        messages: &[ChatMessage],
        _tools: &[ToolSchema],
        _params: &ChatParams,
    ) -> Result<ChatMessage, LlmError> {
        let digest = prompt_digest(messages);
        let mut state = self.state.lock().expect("replay state");
        state.calls += 1;
        let ordinal = state.calls;
        self.lookup(&mut state, ordinal, &digest)
            .ok_or(LlmError::ScriptMiss { ordinal, digest })
    }
}

/// Wraps a backend and records every successful exchange as an ordinal plus
/// digest match, so the capture replays only against identical prompts.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    recorded: Mutex<Vec<ScriptedExchange>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        Self {
            inner,
            recorded: Mutex::new(Vec::new()),
        }
    }

    pub fn script(&self) -> Vec<ScriptedExchange> {
        self.recorded.lock().expect("recording").clone()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(&self.script()).expect("script encodes");
        text.push('\n');
        std::fs::write(path, text)
    }
}

impl ChatBackend for RecordingBackend {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn chat(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSchema],
        params: &ChatParams,
    ) -> Result<ChatMessage, LlmError> {
        let digest = prompt_digest(messages);
        // Hold the lock across the call so ordinals follow call order.
        let mut recorded = self.recorded.lock().expect("recording");
        let reply = self.inner.chat(messages, tools, params)?;
        let ordinal = recorded.len() as u32 + 1;
        recorded.push(ScriptedExchange {
            matcher: ExchangeMatch {
                ordinal: Some(ordinal),
                prompt_digest: Some(digest),
            },
            reply: vec![reply.clone()],
        });
        Ok(reply)
    }
}
