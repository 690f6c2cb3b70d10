use protoagent_core::protocol::{render_simplified_tree, SimplifiedTree};
use protoagent_core::ProtocolDocument;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

pub const ENTITY_DESCRIPTIONS: &str = include_str!("../assets/entity_descriptions_v1.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub description: String,
    #[serde(default)]
    pub key_essentials: Vec<String>,
}

/// Static per-type knowledge: a description and the essentials whose values
/// characterize an entity of that type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DescriptionCatalog(pub BTreeMap<String, CatalogEntry>);

impl DescriptionCatalog {
    pub fn builtin() -> Self {
        Self::from_json(ENTITY_DESCRIPTIONS).expect("shipped catalog parses")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryContext {
    pub entity_descriptions: BTreeMap<String, String>,
    pub simplified_tree: SimplifiedTree,
}

pub fn generic_description(entity_type: &str) -> String {
    format!("Protocol entity of type {entity_type}.")
}

/// One description per entity type present in `doc`. Catalog text is
/// followed by the distinct values the type's key essentials take in this
/// document, in document order.
pub fn build_memory(doc: &ProtocolDocument, catalog: &DescriptionCatalog) -> MemoryContext {
    let mut values: BTreeMap<&str, Vec<(&str, Vec<String>)>> = BTreeMap::new();
    for entity in doc.entities() {
        let slots = values.entry(&entity.entity_type).or_insert_with(|| {
            catalog
                .0
                .get(&entity.entity_type)
                .map(|c| {
                    c.key_essentials
                        .iter()
                        .map(|k| (k.as_str(), Vec::new()))
                        .collect()
                })
                .unwrap_or_default()
        });
        for (name, seen) in slots.iter_mut() {
            if let Some(e) = entity.essential(name) {
                let v = e.value.to_string();
                if !seen.contains(&v) {
                    seen.push(v);
                }
            }
        }
    }
    let entity_descriptions = values
        .into_iter()
        .map(|(t, slots)| {
            let mut text = catalog
                .0
                .get(t)
                .map(|c| c.description.clone())
                .unwrap_or_else(|| generic_description(t));
            let present: Vec<String> = slots
                .iter()
                .filter(|(_, seen)| !seen.is_empty())
                .map(|(name, seen)| format!("{name} = {}", seen.join(" / ")))
                .collect();
            if !present.is_empty() {
                let _ = write!(text, " Values in this protocol: {}.", present.join("; "));
            }
            (t.to_string(), text)
        })
        .collect();
    MemoryContext {
        entity_descriptions,
        simplified_tree: render_simplified_tree(doc),
    }
}

impl MemoryContext {
    /// Prompt rendering. The tree is cut to `max_tree_chars` by eliding the
    /// deepest levels first.
    pub fn render(&self, max_tree_chars: Option<usize>) -> String {
        let mut out = String::from("Entity descriptions:\n");
        for (t, d) in &self.entity_descriptions {
            let _ = writeln!(out, "- {t}: {d}");
        }
        out.push_str("\nProtocol structure (type | name | id):\n");
        match max_tree_chars {
            Some(limit) => out.push_str(&self.simplified_tree.render_within(limit)),
            None => out.push_str(&self.simplified_tree.to_string()),
        }
        out
    }
}
