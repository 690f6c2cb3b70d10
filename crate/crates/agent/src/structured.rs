//! Structured JSON requests: schema validation, conversion to sub-requests
//! and deterministic planning without any model call.

use crate::{AgentError, EssentialRef, Origin, RequestCategory, RetrievedContext, SubRequest};
use jsonschema::error::ValidationErrorKind;
use jsonschema::JSONSchema;
use protoagent_core::edit::{retrieve_entities, Override};
use protoagent_core::{Action, EntityQuery, EntityRef, ProtocolDocument, TypedValue};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashSet;
use std::sync::OnceLock;

pub const STRUCTURED_REQUEST_SCHEMA: &str =
    include_str!("../assets/structured_request.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Modify,
    Add,
    Delete,
}

impl Operation {
    pub fn as_str(self) -> &'static str {
        match self {
            Operation::Modify => "modify",
            Operation::Add => "add",
            Operation::Delete => "delete",
        }
    }

    pub fn category(self) -> RequestCategory {
        match self {
            Operation::Modify => RequestCategory::Modification,
            Operation::Add => RequestCategory::Adding,
            Operation::Delete => RequestCategory::Deleting,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_contains: Option<String>,
}

impl Selector {
    fn query(&self) -> EntityQuery {
        EntityQuery {
            type_filter: self.entity_type.clone(),
            name_contains: self.name_contains.clone(),
            keyword: None,
            max_results: usize::MAX,
        }
    }

    fn describe(&self) -> String {
        match (&self.entity_type, &self.name_contains) {
            (Some(t), Some(n)) => format!("{t} entities whose name contains '{n}'"),
            (Some(t), None) => format!("{t} entities"),
            (None, Some(n)) => format!("entities whose name contains '{n}'"),
            (None, None) => "all entities".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Change {
    pub essential: String,
    pub value: TypedValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredRequest {
    pub operation: Operation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Selector>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub changes: Vec<Change>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<Selector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<Selector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_name: Option<String>,
}

fn changes_text(changes: &[Change]) -> String {
    changes
        .iter()
        .map(|c| format!("{} = {} ({})", c.essential, c.value, c.value.value_type()))
        .collect::<Vec<_>>()
        .join(", ")
}

impl StructuredRequest {
    /// Fixed phrasing used as the sub-request text.
    pub fn canonical_text(&self) -> String {
        let none = Selector::default();
        match self.operation {
            Operation::Modify => format!(
                "modify {}: set {}",
                self.target.as_ref().unwrap_or(&none).describe(),
                changes_text(&self.changes)
            ),
            Operation::Delete => format!(
                "delete {}",
                self.target.as_ref().unwrap_or(&none).describe()
            ),
            Operation::Add => {
                let mut text = format!(
                    "add a copy of the first of {} under the first of {}",
                    self.template.as_ref().unwrap_or(&none).describe(),
                    self.parent.as_ref().unwrap_or(&none).describe()
                );
                if let Some(n) = &self.new_name {
                    text.push_str(&format!(" named '{n}'"));
                }
                if !self.changes.is_empty() {
                    text.push_str(&format!(" with {}", changes_text(&self.changes)));
                }
                text
            }
        }
    }
}

/// The schema for a single request object, with the same definitions as
/// the published file.
fn request_schema() -> &'static JSONSchema {
    static SCHEMA: OnceLock<JSONSchema> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let mut schema: Value =
            serde_json::from_str(STRUCTURED_REQUEST_SCHEMA).expect("shipped schema is JSON");
        let obj = schema.as_object_mut().expect("schema is an object");
        obj.remove("oneOf");
        obj.insert("$ref".into(), Value::String("#/definitions/request".into()));
        JSONSchema::compile(&schema).expect("shipped schema compiles")
    })
}

fn schema_error(prefix: &str, value: &Value) -> Result<(), AgentError> {
    let Err(errors) = request_schema().validate(value) else {
        return Ok(());
    };
    let mut first = None;
    let mut messages = Vec::new();
    for e in errors {
        let mut pointer = format!("{prefix}{}", e.instance_path);
        if let ValidationErrorKind::Required { property } = &e.kind {
            pointer.push('/');
            pointer.push_str(property.as_str().unwrap_or_default());
        }
        messages.push(format!("{pointer}: {e}"));
        first.get_or_insert(pointer);
    }
    Err(AgentError::JsonSchema {
        pointer: first.unwrap_or_default(),
        message: messages.join("; "),
    })
}

/// Parses a single structured request object or an array of them.
pub fn parse_structured_requests(json_text: &str) -> Result<Vec<StructuredRequest>, AgentError> {
    let value: Value = serde_json::from_str(json_text).map_err(|e| AgentError::JsonSchema {
        pointer: String::new(),
        message: format!("not valid JSON: {e}"),
    })?;
    let items: Vec<(String, Value)> = match value {
        Value::Array(items) if items.is_empty() => {
            return Err(AgentError::JsonSchema {
                pointer: String::new(),
                message: "empty request list".into(),
            })
        }
        Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| (format!("/{i}"), v))
            .collect(),
        other => vec![(String::new(), other)],
    };
    items
        .into_iter()
        .map(|(prefix, v)| {
            schema_error(&prefix, &v)?;
            serde_json::from_value(v).map_err(|e| AgentError::JsonSchema {
                pointer: prefix,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Deterministic: the same bytes always give the same sub-requests.
pub fn parse_structured_request(json_text: &str) -> Result<Vec<SubRequest>, AgentError> {
    Ok(parse_structured_requests(json_text)?
        .into_iter()
        .map(|r| SubRequest {
            text: r.canonical_text(),
            category: r.operation.category(),
            rationale: format!("structured '{}' request", r.operation.as_str()),
            origin: Origin::StructuredJson,
            structured: Some(r),
        })
        .collect())
}

/// Result of resolving a structured request against a document.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredPlan {
    pub actions: Vec<Action>,
    pub plan_text: String,
    pub retrieved: RetrievedContext,
    pub ambiguous: bool,
}

fn resolve(
    doc: &ProtocolDocument,
    selector: &Selector,
    role: &str,
) -> Result<Vec<EntityRef>, String> {
    let hits =
        retrieve_entities(doc, &selector.query()).map_err(|e| format!("{role} selector: {e}"))?;
    if hits.is_empty() {
        return Err(format!(
            "no entity matches the {role} selector ({})",
            selector.describe()
        ));
    }
    Ok(hits)
}

/// Resolves selectors with the retrieval tool. Modify and delete act on
/// every match (for delete, matches nested inside another match are
/// dropped); add uses the first template and parent match in document
/// order. The error is a human-readable unresolved-reference message.
pub fn plan_structured(
    doc: &ProtocolDocument,
    request: &StructuredRequest,
) -> Result<StructuredPlan, String> {
    let missing = |what: &str| format!("structured request lacks '{what}'");
    match request.operation {
        Operation::Modify => {
            let targets = resolve(
                doc,
                request.target.as_ref().ok_or_else(|| missing("target"))?,
                "target",
            )?;
            let mut actions = Vec::new();
            let mut essentials = Vec::new();
            let mut steps = Vec::new();
            for t in &targets {
                for c in &request.changes {
                    actions.push(Action::SetEssential {
                        entity_id: t.id.clone(),
                        essential_name: c.essential.clone(),
                        new_value: c.value.clone(),
                    });
                    essentials.push(EssentialRef::new(&t.id, &c.essential));
                    steps.push(format!(
                        "Set {} of '{}' ({}) to {}.",
                        c.essential, t.name, t.id, c.value
                    ));
                }
            }
            Ok(StructuredPlan {
                ambiguous: targets.len() > 1,
                plan_text: numbered(&steps),
                retrieved: RetrievedContext {
                    entities: targets,
                    essentials,
                },
                actions,
            })
        }
        Operation::Delete => {
            let hits = resolve(
                doc,
                request.target.as_ref().ok_or_else(|| missing("target"))?,
                "target",
            )?;
            let matched: HashSet<&str> = hits.iter().map(|h| h.id.as_str()).collect();
            let topmost: Vec<EntityRef> = hits
                .iter()
                .filter(|h| {
                    let ancestry = doc.ancestry(&h.id);
                    !ancestry[..ancestry.len() - 1]
                        .iter()
                        .any(|a| matched.contains(a.id.as_str()))
                })
                .cloned()
                .collect();
            let steps: Vec<String> = topmost
                .iter()
                .map(|t| format!("Delete '{}' ({}) with everything below it.", t.name, t.id))
                .collect();
            Ok(StructuredPlan {
                ambiguous: topmost.len() > 1,
                actions: topmost
                    .iter()
                    .map(|t| Action::DeleteEntity {
                        entity_id: t.id.clone(),
                    })
                    .collect(),
                plan_text: numbered(&steps),
                retrieved: RetrievedContext {
                    entities: topmost,
                    essentials: Vec::new(),
                },
            })
        }
        Operation::Add => {
            let templates = resolve(
                doc,
                request
                    .template
                    .as_ref()
                    .ok_or_else(|| missing("template"))?,
                "template",
            )?;
            let parents = resolve(
                doc,
                request.parent.as_ref().ok_or_else(|| missing("parent"))?,
                "parent",
            )?;
            let (template, parent) = (&templates[0], &parents[0]);
            let overrides: Vec<Override> = request
                .changes
                .iter()
                .map(|c| Override {
                    essential_name: c.essential.clone(),
                    value: c.value.clone(),
                })
                .collect();
            let mut steps = vec![format!(
                "Copy '{}' ({}) and append the copy under '{}' ({}).",
                template.name, template.id, parent.name, parent.id
            )];
            if let Some(n) = &request.new_name {
                steps.push(format!("Name the copy '{n}'."));
            }
            for c in &request.changes {
                steps.push(format!("On the copy, set {} to {}.", c.essential, c.value));
            }
            let essentials = request
                .changes
                .iter()
                .map(|c| EssentialRef::new(&template.id, &c.essential))
                .collect();
            let mut entities = vec![template.clone()];
            if parent.id != template.id {
                entities.push(parent.clone());
            }
            Ok(StructuredPlan {
                ambiguous: templates.len() > 1 || parents.len() > 1,
                actions: vec![Action::AddEntity {
                    template_entity_id: template.id.clone(),
                    parent_id: parent.id.clone(),
                    overrides,
                    new_name: request.new_name.clone(),
                }],
                plan_text: numbered(&steps),
                retrieved: RetrievedContext {
                    entities,
                    essentials,
                },
            })
        }
    }
}

pub(crate) fn numbered(steps: &[String]) -> String {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}
