//! The planner's tool-calling loop.
//!
//! The model may call `retrieve_entities`, `get_essentials` and
//! `validate_actions` any number of times within [`MAX_PLANNER_ROUNDS`]
//! replies, then answers with `{"actions": [...], "plan_text": "..."}`.

use crate::json::extract_object;
use crate::{
    AgentError, EssentialRef, MemoryContext, ProposalError, RequestCategory, RetrievedContext,
    SubRequest,
};
use jsonschema::JSONSchema;
use protoagent_core::edit::{get_essentials, retrieve_entities, ACTION_SCHEMA};
use protoagent_core::protocol::validate_structure;
use protoagent_core::{Action, EntityQuery, ProtocolDocument, Toolset};
use protoagent_llm::{ChatMessage, ChatParams, Gateway, ToolCall, ToolSchema};
use serde::Deserialize;
use serde_json::{json, Value};
use std::sync::OnceLock;

pub const PLANNER_PROMPT: &str = include_str!("../assets/planner_v1.txt");
pub const MAX_PLANNER_ROUNDS: usize = 8;
pub const UNRESOLVED_REFERENCE: &str = "UNRESOLVED_REFERENCE";

/// Everything the planner produced for one sub-request.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub actions: Vec<Action>,
    pub plan_text: String,
    pub retrieved: RetrievedContext,
    pub low_confidence: bool,
    /// Set when the plan cannot be proposed as-is, for instance because an
    /// action names an entity that does not exist.
    pub error: Option<ProposalError>,
}

fn action_schema() -> Value {
    serde_json::from_str(ACTION_SCHEMA).expect("shipped action schema is JSON")
}

/// Parameters object whose `actions` property is a list of actions. The
/// action definitions move to the root so their references still resolve.
fn with_actions(mut properties: Value, required: &[&str]) -> Value {
    let mut action = action_schema();
    let definitions = action
        .as_object_mut()
        .and_then(|o| o.remove("definitions"))
        .unwrap_or(Value::Null);
    let one_of = action.get("oneOf").cloned().unwrap_or(Value::Null);
    properties["actions"] = json!({ "type": "array", "items": { "oneOf": one_of } });
    json!({
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": false,
        "definitions": definitions,
    })
}

pub fn planner_tools() -> Vec<ToolSchema> {
    vec![
        ToolSchema {
            name: "retrieve_entities".into(),
            description: "Find entities by exact type, case-insensitive name fragment or free keyword. At least one filter is required.".into(),
            parameters: json!({
                "type": "object",
                "properties": {
                    "type_filter": { "type": "string" },
                    "name_contains": { "type": "string" },
                    "keyword": { "type": "string" },
                    "max_results": { "type": "integer", "minimum": 1, "maximum": 100 }
                },
                "minProperties": 1,
                "additionalProperties": false
            }),
            result: json!({ "type": "object", "properties": { "entities": { "type": "array" } } }),
        },
        ToolSchema {
            name: "get_essentials".into(),
            description: "Read the essentials of one entity, optionally only the named ones.".into(),
            parameters: json!({
                "type": "object",
                "properties": {
                    "entity_id": { "type": "string", "minLength": 1 },
                    "names": { "type": "array", "items": { "type": "string" } }
                },
                "required": ["entity_id"],
                "additionalProperties": false
            }),
            result: json!({ "type": "object", "properties": { "essentials": { "type": "array" } } }),
        },
        ToolSchema {
            name: "validate_actions".into(),
            description: "Dry-run actions against the protocol and report errors, side effects and rule issues.".into(),
            parameters: with_actions(json!({}), &["actions"]),
            result: json!({ "type": "object", "properties": { "ok": { "type": "boolean" } } }),
        },
    ]
}

fn final_answer_schema() -> &'static JSONSchema {
    static SCHEMA: OnceLock<JSONSchema> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let schema = with_actions(
            json!({ "plan_text": { "type": "string", "minLength": 1 } }),
            &["actions", "plan_text"],
        );
        JSONSchema::compile(&schema).expect("final answer schema compiles")
    })
}

#[derive(Deserialize)]
struct FinalAnswer {
    actions: Vec<Action>,
    plan_text: String,
}

fn tool_error(code: &str, message: impl Into<String>) -> Value {
    json!({ "error": code, "message": message.into() })
}

struct Session<'a> {
    doc: &'a ProtocolDocument,
    toolset: &'a Toolset,
    retrieved: RetrievedContext,
    multi_candidate: bool,
}

impl Session<'_> {
    fn run_tool(&mut self, call: &ToolCall) -> Value {
        let args = &call.arguments_json;
        match call.tool_name.as_str() {
            "retrieve_entities" => {
                let query: EntityQuery = match serde_json::from_value(args.clone()) {
                    Ok(q) => q,
                    Err(e) => return tool_error("INVALID_ARGUMENTS", e.to_string()),
                };
                match retrieve_entities(self.doc, &query) {
                    Ok(hits) => {
                        if hits.len() > 1 {
                            self.multi_candidate = true;
                        }
                        for h in &hits {
                            self.retrieved.add_entity(h.clone());
                        }
                        json!({ "entities": hits })
                    }
                    Err(e) => tool_error(e.code(), e.to_string()),
                }
            }
            "get_essentials" => {
                let id = args["entity_id"].as_str().unwrap_or_default();
                let names: Option<Vec<String>> = args
                    .get("names")
                    .and_then(|n| serde_json::from_value(n.clone()).ok());
                match get_essentials(self.doc, id, names.as_deref()) {
                    Ok(essentials) => {
                        if let Some(hit) = retrieve_by_id(self.doc, id) {
                            self.retrieved.add_entity(hit);
                        }
                        let list: Vec<Value> = essentials
                            .iter()
                            .map(|e| {
                                self.retrieved.add_essential(EssentialRef::new(id, &e.name));
                                json!({ "name": e.name, "value": e.value })
                            })
                            .collect();
                        json!({ "entity_id": id, "essentials": list })
                    }
                    Err(e) => tool_error(e.code(), e.to_string()),
                }
            }
            "validate_actions" => {
                let actions: Vec<Action> = match serde_json::from_value(args["actions"].clone()) {
                    Ok(a) => a,
                    Err(e) => return tool_error("INVALID_ARGUMENTS", e.to_string()),
                };
                match self.toolset.apply_actions(self.doc, &actions) {
                    Ok(result) => {
                        let report = validate_structure(&result.document, &self.toolset.rules);
                        json!({
                            "ok": report.ok,
                            "side_effects": result.side_effects,
                            "issues": report.issues,
                        })
                    }
                    Err(e) => json!({ "ok": false, "error": e.code(), "message": e.to_string() }),
                }
            }
            other => tool_error("UNKNOWN_TOOL", format!("no tool named '{other}'")),
        }
    }
}

fn retrieve_by_id(doc: &ProtocolDocument, id: &str) -> Option<protoagent_core::EntityRef> {
    let entity = doc.entity(id)?;
    Some(protoagent_core::EntityRef {
        id: entity.id.clone(),
        name: entity.name.clone(),
        entity_type: entity.entity_type.clone(),
        parent_id: doc.parent_of(id).map(|p| p.id.clone()),
    })
}

fn check_answer(content: &str, category: RequestCategory) -> Result<FinalAnswer, String> {
    let value = extract_object(content)?;
    if let Err(errors) = final_answer_schema().validate(&value) {
        let detail: Vec<String> = errors
            .map(|e| format!("{e} at '{}'", e.instance_path))
            .collect();
        return Err(format!(
            "answer does not match the schema: {}",
            detail.join("; ")
        ));
    }
    let answer: FinalAnswer =
        serde_json::from_value(value).map_err(|e| format!("answer has invalid values: {e}"))?;
    if answer.actions.is_empty() {
        return Err("the action list is empty".into());
    }
    let expected = category.action_kind();
    if let Some(bad) = answer.actions.iter().find(|a| Some(a.kind()) != expected) {
        return Err(format!(
            "a {category} request allows only {:?} actions, got {:?}",
            expected,
            bad.kind()
        ));
    }
    Ok(answer)
}

/// Plans one dispatchable sub-request.
///
/// An unusable final answer gets one corrective retry before
/// [`AgentError::MalformedPlan`]. Actions naming entities that do not exist
/// are returned with an [`UNRESOLVED_REFERENCE`] error rather than as `Err`,
/// so the proposal can still be shown for review.
pub fn plan(
    sub: &SubRequest,
    doc: &ProtocolDocument,
    memory: &MemoryContext,
    gateway: &Gateway,
    toolset: &Toolset,
    params: &ChatParams,
) -> Result<PlanOutcome, AgentError> {
    if !sub.is_dispatchable() {
        return Err(AgentError::NotDispatchable);
    }
    let tree_budget = gateway.max_input_tokens().map(|t| t.saturating_mul(4) / 2);
    let mut messages = vec![
        ChatMessage::system(format!("{PLANNER_PROMPT}\n{}", memory.render(tree_budget))),
        ChatMessage::user(format!("Sub-request ({}): {}", sub.category, sub.text)),
    ];
    let tools = planner_tools();
    let mut session = Session {
        doc,
        toolset,
        retrieved: RetrievedContext::default(),
        multi_candidate: false,
    };
    let mut retried = false;
    for _ in 0..MAX_PLANNER_ROUNDS {
        let reply = gateway.chat(&messages, &tools, params)?;
        if let Some(call) = &reply.tool_call {
            let result = session.run_tool(call);
            messages.push(reply);
            messages.push(ChatMessage::tool_result(result));
            continue;
        }
        let answer = match check_answer(&reply.content, sub.category) {
            Ok(a) => a,
            Err(problem) if !retried => {
                tracing::debug!(%problem, "plan rejected, retrying once");
                retried = true;
                messages.push(reply);
                messages.push(ChatMessage::user(format!(
                    "That answer could not be used ({problem}). Answer again with only the JSON object."
                )));
                continue;
            }
            Err(problem) => return Err(AgentError::MalformedPlan(problem)),
        };
        let missing: Vec<&str> = answer
            .actions
            .iter()
            .flat_map(Action::referenced_ids)
            .filter(|id| !doc.contains(id))
            .collect();
        let error = (!missing.is_empty()).then(|| ProposalError {
            code: UNRESOLVED_REFERENCE.into(),
            message: format!(
                "actions name entities that do not exist: {}",
                missing.join(", ")
            ),
        });
        return Ok(PlanOutcome {
            low_confidence: session.multi_candidate && answer.actions.len() == 1,
            actions: answer.actions,
            plan_text: answer.plan_text,
            retrieved: session.retrieved,
            error,
        });
    }
    Err(AgentError::MalformedPlan(format!(
        "no final answer within {MAX_PLANNER_ROUNDS} replies"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tool_schemas_compile() {
        for t in planner_tools() {
            JSONSchema::compile(&t.parameters).unwrap_or_else(|e| panic!("{}: {e}", t.name));
        }
        final_answer_schema();
    }

    #[test]
    fn category_purity_is_enforced() {
        let del =
            r#"{"actions":[{"op":"delete_entity","entity_id":"a"}],"plan_text":"1. Delete a."}"#;
        assert!(check_answer(del, RequestCategory::Deleting).is_ok());
        assert!(check_answer(del, RequestCategory::Modification).is_err());
        assert!(check_answer(
            r#"{"actions":[],"plan_text":"x"}"#,
            RequestCategory::Deleting
        )
        .is_err());
        assert!(check_answer(
            r#"{"actions":[{"op":"delete_entity"}],"plan_text":"x"}"#,
            RequestCategory::Deleting
        )
        .is_err());
    }
}
