use super::EditError;
use crate::protocol::{Entity, Essential, ProtocolDocument};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_RESULTS: usize = 20;

/// Entity lookup; every filter that is set must match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_filter: Option<String>,
    /// Case-insensitive substring of the entity name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_contains: Option<String>,
    /// Free text matched against name, type, essential names and values,
    /// ignoring case and whitespace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword: Option<String>,
    #[serde(default = "default_max")]
    pub max_results: usize,
}

fn default_max() -> usize {
    DEFAULT_MAX_RESULTS
}

impl Default for EntityQuery {
    fn default() -> Self {
        Self {
            type_filter: None,
            name_contains: None,
            keyword: None,
            max_results: DEFAULT_MAX_RESULTS,
        }
    }
}

impl EntityQuery {
    pub fn by_type(entity_type: &str) -> Self {
        Self {
            type_filter: Some(entity_type.to_string()),
            ..Self::default()
        }
    }

    pub fn by_keyword(keyword: &str) -> Self {
        Self {
            keyword: Some(keyword.to_string()),
            ..Self::default()
        }
    }

    pub fn by_name(fragment: &str) -> Self {
        Self {
            name_contains: Some(fragment.to_string()),
            ..Self::default()
        }
    }

    fn matches(&self, entity: &Entity) -> bool {
        if let Some(t) = &self.type_filter {
            if entity.entity_type != *t {
                return false;
            }
        }
        if let Some(n) = &self.name_contains {
            if !entity.name.to_lowercase().contains(&n.to_lowercase()) {
                return false;
            }
        }
        if let Some(k) = &self.keyword {
            let needle = squash(k);
            let hit = |s: &str| squash(s).contains(&needle);
            let any = hit(&entity.name)
                || hit(&entity.entity_type)
                || entity
                    .essentials
                    .iter()
                    .any(|e| hit(&e.name) || e.value.text_fragments().into_iter().any(hit));
            if !any {
                return false;
            }
        }
        true
    }
}

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRef {
    pub id: String,
    pub name: String,
    pub entity_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
}

impl EntityRef {
    fn of(entity: &Entity, parent: Option<&Entity>) -> Self {
        Self {
            id: entity.id.clone(),
            name: entity.name.clone(),
            entity_type: entity.entity_type.clone(),
            parent_id: parent.map(|p| p.id.clone()),
        }
    }
}

/// Matching entities in document preorder, at most `max_results` of them.
pub fn retrieve_entities(
    doc: &ProtocolDocument,
    query: &EntityQuery,
) -> Result<Vec<EntityRef>, EditError> {
    let blank = |s: &Option<String>| s.as_deref().is_none_or(|v| v.trim().is_empty());
    if blank(&query.type_filter) && blank(&query.name_contains) && blank(&query.keyword) {
        return Err(EditError::EmptyQuery);
    }
    let mut out = Vec::new();
    let mut stack: Vec<(&Entity, Option<&Entity>)> = vec![(&doc.root, None)];
    while let Some((entity, parent)) = stack.pop() {
        if out.len() >= query.max_results {
            break;
        }
        if query.matches(entity) {
            out.push(EntityRef::of(entity, parent));
        }
        stack.extend(entity.children.iter().rev().map(|c| (c, Some(entity))));
    }
    Ok(out)
}

/// The entity's essentials in document order, optionally restricted to `names`.
pub fn get_essentials(
    doc: &ProtocolDocument,
    entity_id: &str,
    names: Option<&[String]>,
) -> Result<Vec<Essential>, EditError> {
    let entity = doc
        .entity(entity_id)
        .ok_or_else(|| EditError::UnknownEntity(entity_id.to_string()))?;
    Ok(entity
        .essentials
        .iter()
        .filter(|e| names.is_none_or(|n| n.contains(&e.name)))
        .cloned()
        .collect())
}
