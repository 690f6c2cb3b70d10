use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("rate limited{}", .retry_after_secs.map(|s| format!(", retry after {s}s")).unwrap_or_default())]
    RateLimited { retry_after_secs: Option<u64> },
    #[error("no scripted reply for call {ordinal} (prompt digest {digest})")]
    ScriptMiss { ordinal: u32, digest: String },
    #[error("tool call to '{tool}' violates its argument schema: {message}")]
    SchemaViolation { tool: String, message: String },
    #[error("input of ~{estimated} tokens exceeds the limit of {limit}")]
    InputTooLarge { estimated: usize, limit: usize },
}

impl LlmError {
    pub fn code(&self) -> &'static str {
        match self {
            LlmError::Precondition(_) => "PRECONDITION",
            LlmError::Backend(_) => "BACKEND_ERROR",
            LlmError::RateLimited { .. } => "RATE_LIMITED",
            LlmError::ScriptMiss { .. } => "SCRIPT_MISS",
            LlmError::SchemaViolation { .. } => "SCHEMA_VIOLATION",
            LlmError::InputTooLarge { .. } => "INPUT_TOO_LARGE",
        }
    }
}
