//! Chat-with-tools and embedding abstraction.
//!
//! Backends implement [`ChatBackend`] and [`Embedder`]. Callers go through
//! [`Gateway`], which enforces the message preconditions and re-validates
//! tool-call arguments. [`ScriptedBackend`] replays JSON scripts for offline
//! tests and evaluation, [`RecordingBackend`] captures live exchanges into
//! such scripts, and [`HttpBackend`] talks to OpenAI-compatible endpoints.

mod config;
mod embed;
mod error;
mod gateway;
mod http;
mod message;
mod scripted;

pub use config::{BackendKind, ChatConfig, ConfigError, EmbedConfig, LlmConfig};
pub use embed::{tokenize, HashingEmbedder, HASHING_DIM, HASHING_SEED};
pub use error::LlmError;
pub use gateway::{estimate_tokens, Gateway};
pub use http::{HttpBackend, HttpEmbedder, API_KEY_ENV};
pub use message::{ChatMessage, ChatParams, EmbeddingVector, Role, ToolCall, ToolSchema};
pub use scripted::{
    load_script, parse_script, prompt_digest, ExchangeMatch, RecordingBackend, ScriptedBackend,
    ScriptedExchange,
};

pub trait ChatBackend: Send + Sync {
    fn model_id(&self) -> &str;

    /// One model turn: either a final assistant message or a tool call.
    fn chat(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSchema],
        params: &ChatParams,
    ) -> Result<ChatMessage, LlmError>;
}

pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError>;
}
