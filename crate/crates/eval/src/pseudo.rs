//! Pseudo-task reconstruction: a model sees only what the planner
//! retrieved and guesses the hidden request. Faithfulness is the mean
//! embedding similarity between the real request and those guesses.

use crate::metrics::{cosine_similarity, mean_sem};
use crate::EvalError;
use protoagent_agent::{build_memory, DescriptionCatalog, RetrievedContext};
use protoagent_core::protocol::serialize_entity;
use protoagent_core::{Entity, ProtocolDocument};
use protoagent_llm::{ChatMessage, ChatParams, Embedder, Gateway};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write;

pub const PSEUDO_TASK_PROMPT: &str = include_str!("../assets/pseudo_tasks_v1.txt");
pub const DEFAULT_PSEUDO_TASKS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoTask {
    pub text: String,
    pub source_case_id: String,
}

/// The retrieved entity without its children. Entities whose essentials
/// were read individually keep only those essentials.
fn snippet(entity: &Entity, retrieved: &RetrievedContext) -> String {
    let names: BTreeSet<&str> = retrieved
        .essentials
        .iter()
        .filter(|e| e.entity_id == entity.id)
        .map(|e| e.essential_name.as_str())
        .collect();
    let mut shown = entity.clone();
    shown.children.clear();
    if !names.is_empty() {
        shown.essentials.retain(|e| names.contains(e.name.as_str()));
    }
    serialize_entity(&shown, false)
}

/// Messages for the reconstruction call. Built from the retrieved context,
/// the document and the type descriptions only; the request never enters.
pub fn pseudo_task_prompt(
    retrieved: &RetrievedContext,
    doc: &ProtocolDocument,
    catalog: &DescriptionCatalog,
    n: usize,
) -> Result<Vec<ChatMessage>, EvalError> {
    if n == 0 {
        return Err(EvalError::Precondition("n must be at least 1".into()));
    }
    if retrieved.is_empty() {
        return Err(EvalError::Precondition("retrieved context is empty".into()));
    }
    let mut ids: Vec<&str> = retrieved.entities.iter().map(|e| e.id.as_str()).collect();
    for e in &retrieved.essentials {
        if !ids.contains(&e.entity_id.as_str()) {
            ids.push(&e.entity_id);
        }
    }
    let entities: Vec<&Entity> = ids.iter().filter_map(|id| doc.entity(id)).collect();
    let memory = build_memory(doc, catalog);
    let types: BTreeSet<&str> = entities.iter().map(|e| e.entity_type.as_str()).collect();

    let mut user = String::from("Entity descriptions:\n");
    for t in types {
        if let Some(d) = memory.entity_descriptions.get(t) {
            let _ = writeln!(user, "- {t}: {d}");
        }
    }
    user.push_str("\nRetrieved entities:\n");
    for e in entities {
        user.push_str(&snippet(e, retrieved));
    }
    let _ = write!(user, "\nNumber of guesses: {n}");
    Ok(vec![
        ChatMessage::system(PSEUDO_TASK_PROMPT),
        ChatMessage::user(user),
    ])
}

fn parse_tasks(content: &str, n: usize) -> Result<Vec<String>, String> {
    #[derive(Deserialize)]
    struct Reply {
        tasks: Vec<String>,
    }
    let text = content.trim();
    let start = text.find('{').ok_or("reply contains no JSON object")?;
    let end = text.rfind('}').ok_or("reply contains no JSON object")?;
    let reply: Reply = serde_json::from_str(text.get(start..=end).unwrap_or_default())
        .map_err(|e| e.to_string())?;
    let tasks: Vec<String> = reply
        .tasks
        .into_iter()
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    if tasks.len() < n {
        return Err(format!("expected {n} tasks, got {}", tasks.len()));
    }
    Ok(tasks.into_iter().take(n).collect())
}

/// One model call for `n` guesses, with one corrective retry.
pub fn generate_pseudo_tasks(
    case_id: &str,
    retrieved: &RetrievedContext,
    doc: &ProtocolDocument,
    catalog: &DescriptionCatalog,
    gateway: &Gateway,
    params: &ChatParams,
    n: usize,
) -> Result<Vec<PseudoTask>, EvalError> {
    let mut messages = pseudo_task_prompt(retrieved, doc, catalog, n)?;
    let first = gateway.chat(&messages, &[], params)?;
    let tasks = match parse_tasks(&first.content, n) {
        Ok(t) => t,
        Err(problem) => {
            messages.push(first);
            messages.push(ChatMessage::user(format!(
                "That reply could not be used ({problem}). Answer again with only the JSON object."
            )));
            let second = gateway.chat(&messages, &[], params)?;
            parse_tasks(&second.content, n).map_err(EvalError::MalformedOutput)?
        }
    };
    Ok(tasks
        .into_iter()
        .map(|text| PseudoTask {
            text,
            source_case_id: case_id.to_string(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Faithfulness {
    pub mean: f64,
    pub sem: f64,
    pub similarities: Vec<f64>,
}

/// Mean cosine similarity between the request and each pseudo task.
pub fn compute_faithfulness(
    request_text: &str,
    tasks: &[PseudoTask],
    embedder: &dyn Embedder,
) -> Result<Faithfulness, EvalError> {
    if tasks.is_empty() {
        return Err(EvalError::Precondition("no pseudo tasks".into()));
    }
    let reference = embedder.embed(request_text)?;
    let similarities = tasks
        .iter()
        .map(|t| cosine_similarity(&reference, &embedder.embed(&t.text)?))
        .collect::<Result<Vec<f64>, EvalError>>()?;
    let stats = mean_sem(&similarities).expect("non-empty");
    Ok(Faithfulness {
        mean: stats.mean,
        sem: stats.sem,
        similarities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use protoagent_llm::HashingEmbedder;

    #[test]
    fn identical_tasks_are_fully_faithful() {
        let tasks: Vec<PseudoTask> = (0..4)
            .map(|_| PseudoTask {
                text: "delete the lung cad".into(),
                source_case_id: "x".into(),
            })
            .collect();
        let f = compute_faithfulness("delete the lung cad", &tasks, &HashingEmbedder::default())
            .unwrap();
        assert!((f.mean - 1.0).abs() < 1e-9);
        assert!(f.sem.abs() < 1e-9);
    }

    #[test]
    fn task_parsing() {
        assert_eq!(
            parse_tasks(r#"{"tasks":["a","b","c"]}"#, 2).unwrap(),
            vec!["a", "b"]
        );
        assert!(parse_tasks(r#"{"tasks":["a"," "]}"#, 2).is_err());
        assert!(parse_tasks("none", 1).is_err());
    }
}
