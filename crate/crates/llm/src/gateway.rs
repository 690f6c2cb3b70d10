use crate::{ChatBackend, ChatMessage, ChatParams, LlmError, Role, ToolSchema};
use jsonschema::JSONSchema;
use serde_json::json;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

/// Rough token estimate used by the input guard: four characters per token.
pub fn estimate_tokens(messages: &[ChatMessage]) -> usize {
    let chars: usize = messages
        .iter()
        .map(|m| {
            m.content.chars().count()
                + m.tool_call
                    .as_ref()
                    .map_or(0, |c| c.arguments_json.to_string().len())
                + m.tool_result.as_ref().map_or(0, |r| r.to_string().len())
        })
        .sum();
    chars.div_ceil(4)
}

/// Front door for chat calls. Checks message preconditions and the input
/// budget, and re-validates every tool call against the tool's argument
/// schema. An invalid call is handed back to the model once with the
/// validation error; a second invalid call fails with `SchemaViolation`.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    max_input_tokens: Option<usize>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            max_input_tokens: None,
        }
    }

    pub fn with_max_input_tokens(mut self, limit: Option<usize>) -> Self {
        self.max_input_tokens = limit;
        self
    }

    pub fn max_input_tokens(&self) -> Option<usize> {
        self.max_input_tokens
    }

    pub fn backend(&self) -> &Arc<dyn ChatBackend> {
        &self.backend
    }

    pub fn chat(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSchema],
        params: &ChatParams,
    ) -> Result<ChatMessage, LlmError> {
        check_messages(messages)?;
        if let Some(limit) = self.max_input_tokens {
            let estimated = estimate_tokens(messages);
            if estimated > limit {
                return Err(LlmError::InputTooLarge { estimated, limit });
            }
        }
        let validators = compile_tools(tools)?;

        let reply = self.backend.chat(messages, tools, params)?;
        let Err(message) = check_tool_call(&reply, &validators) else {
            return Ok(reply);
        };
        tracing::debug!(%message, "re-asking after invalid tool call");
        let mut retry = messages.to_vec();
        retry.push(reply);
        retry.push(ChatMessage::tool_result(json!({
            "error": "invalid_arguments",
            "message": message,
        })));
        let second = self.backend.chat(&retry, tools, params)?;
        match check_tool_call(&second, &validators) {
            Ok(()) => Ok(second),
            Err(message) => Err(LlmError::SchemaViolation {
                tool: second.tool_call.map(|c| c.tool_name).unwrap_or_default(),
                message,
            }),
        }
    }
}

fn check_messages(messages: &[ChatMessage]) -> Result<(), LlmError> {
    let first = messages
        .first()
        .ok_or_else(|| LlmError::Precondition("message list is empty".into()))?;
    if first.role != Role::System {
        return Err(LlmError::Precondition(
            "first message must have the system role".into(),
        ));
    }
    if let Some(i) = messages
        .iter()
        .position(|m| m.role == Role::Tool && m.tool_result.is_none())
    {
        return Err(LlmError::Precondition(format!(
            "tool message {i} carries no tool_result"
        )));
    }
    Ok(())
}

fn compile_tools(tools: &[ToolSchema]) -> Result<HashMap<&str, JSONSchema>, LlmError> {
    let mut seen = HashSet::new();
    let mut out = HashMap::new();
    for tool in tools {
        if !seen.insert(tool.name.as_str()) {
            return Err(LlmError::Precondition(format!(
                "duplicate tool name '{}'",
                tool.name
            )));
        }
        let compiled = JSONSchema::compile(&tool.parameters).map_err(|e| {
            LlmError::Precondition(format!("tool '{}' has an invalid schema: {e}", tool.name))
        })?;
        out.insert(tool.name.as_str(), compiled);
    }
    Ok(out)
}

fn check_tool_call(
    reply: &ChatMessage,
    validators: &HashMap<&str, JSONSchema>,
) -> Result<(), String> {
    let Some(call) = &reply.tool_call else {
        return Ok(());
    };
    let Some(schema) = validators.get(call.tool_name.as_str()) else {
        return Err(format!("unknown tool '{}'", call.tool_name));
    };
    schema.validate(&call.arguments_json).map_err(|errors| {
        errors
            .map(|e| format!("{} at '{}'", e, e.instance_path))
            .collect::<Vec<_>>()
            .join("; ")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ScriptedBackend, ScriptedExchange};

    fn tool() -> ToolSchema {
        ToolSchema {
            name: "retrieve_entities".into(),
            description: "find entities".into(),
            parameters: json!({
                "type": "object",
                "properties": {"keyword": {"type": "string"}},
                "required": ["keyword"],
                "additionalProperties": false
            }),
            result: serde_json::Value::Null,
        }
    }

    fn gateway(replies: Vec<ChatMessage>) -> (Gateway, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(
            replies
                .into_iter()
                .enumerate()
                .map(|(i, r)| ScriptedExchange::ordinal(i as u32 + 1, vec![r]))
                .collect(),
        ));
        (Gateway::new(backend.clone()), backend)
    }

    fn prompt() -> Vec<ChatMessage> {
        vec![ChatMessage::system("s"), ChatMessage::user("u")]
    }

    #[test]
    fn preconditions() {
        let (g, backend) = gateway(vec![]);
        let p = ChatParams::default();
        assert!(matches!(
            g.chat(&[], &[], &p),
            Err(LlmError::Precondition(_))
        ));
        assert!(matches!(
            g.chat(&[ChatMessage::user("x")], &[], &p),
            Err(LlmError::Precondition(_))
        ));
        let bad_tool = ChatMessage {
            role: Role::Tool,
            content: String::new(),
            tool_call: None,
            tool_result: None,
        };
        assert!(matches!(
            g.chat(&[ChatMessage::system("s"), bad_tool], &[], &p),
            Err(LlmError::Precondition(_))
        ));
        assert!(matches!(
            g.chat(&prompt(), &[tool(), tool()], &p),
            Err(LlmError::Precondition(_))
        ));
        assert_eq!(backend.calls(), 0);
    }

    #[test]
    fn input_guard() {
        let (g, backend) = gateway(vec![ChatMessage::assistant("ok")]);
        let g = g.with_max_input_tokens(Some(1));
        let long = vec![ChatMessage::system("a".repeat(40))];
        assert!(matches!(
            g.chat(&long, &[], &ChatParams::default()),
            Err(LlmError::InputTooLarge {
                estimated: 10,
                limit: 1
            })
        ));
        assert_eq!(backend.calls(), 0);
    }

    #[test]
    fn invalid_call_is_reasked_once() {
        let (g, backend) = gateway(vec![
            ChatMessage::tool_call("retrieve_entities", json!({"kw": 1})),
            ChatMessage::tool_call("retrieve_entities", json!({"keyword": "LungCAD"})),
        ]);
        let reply = g
            .chat(&prompt(), &[tool()], &ChatParams::default())
            .unwrap();
        assert_eq!(
            reply.tool_call.unwrap().arguments_json,
            json!({"keyword": "LungCAD"})
        );
        assert_eq!(backend.calls(), 2);
    }

    #[test]
    fn second_invalid_call_fails() {
        let (g, _) = gateway(vec![
            ChatMessage::tool_call("retrieve_entities", json!({})),
            ChatMessage::tool_call("nonexistent_tool", json!({})),
        ]);
        let err = g
            .chat(&prompt(), &[tool()], &ChatParams::default())
            .unwrap_err();
        assert!(
            matches!(err, LlmError::SchemaViolation { ref tool, .. } if tool == "nonexistent_tool")
        );
    }

    #[test]
    fn plain_answers_pass_through() {
        let (g, _) = gateway(vec![ChatMessage::assistant("{\"x\":1}")]);
        let reply = g
            .chat(&prompt(), &[tool()], &ChatParams::default())
            .unwrap();
        assert_eq!(reply.content, "{\"x\":1}");
    }
}
