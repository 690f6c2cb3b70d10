//! The hierarchical scan-protocol document.
//!
//! A protocol is a tree of entities rooted at a `ScanProtocol` entity. Each
//! entity carries typed key-value parameters ("essentials") and ordered child
//! entities. Documents are plain values: edits build new documents.

mod report;
mod rules;
mod syntax;
mod tree;
mod value;
mod vocabulary;
mod xml;

pub use report::{Issue, Severity, ValidationReport};
pub use rules::{
    validate_structure, AllowedValue, Condition, Dependency, Requirement, RuleSet, RuleSetError,
};
pub use syntax::{validate_document, validate_syntax, SyntaxOptions};
pub use tree::{render_simplified_tree, SimplifiedTree};
pub use value::{
    is_enum_token, CompositeNode, NodeContent, Payload, TypedValue, ValueError, ValueType,
};
pub use vocabulary::{EssentialSpec, Vocabulary};
pub use xml::{parse_protocol, serialize_entity, serialize_protocol, ParseError};

use sha2::{Digest, Sha256};

pub const ROOT_TYPE: &str = "ScanProtocol";
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolDocument {
    pub schema_version: String,
    pub root: Entity,
    pub source_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: String,
    pub name: String,
    pub entity_type: String,
    pub essentials: Vec<Essential>,
    pub children: Vec<Entity>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Essential {
    pub name: String,
    pub value: TypedValue,
}

impl Essential {
    pub fn new(name: impl Into<String>, value: TypedValue) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

impl Entity {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        entity_type: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            entity_type: entity_type.into(),
            essentials: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn with_essential(mut self, name: &str, value: TypedValue) -> Self {
        self.essentials.push(Essential::new(name, value));
        self
    }

    pub fn with_child(mut self, child: Entity) -> Self {
        self.children.push(child);
        self
    }

    pub fn essential(&self, name: &str) -> Option<&Essential> {
        self.essentials.iter().find(|e| e.name == name)
    }

    /// Preorder walk of this subtree, yielding `(depth, entity)` with this
    /// entity at depth 0.
    pub fn preorder(&self) -> Preorder<'_> {
        Preorder {
            stack: vec![(0, self)],
        }
    }

    pub fn count(&self) -> usize {
        self.preorder().count()
    }

    fn find(&self, id: &str) -> Option<&Entity> {
        self.preorder().map(|(_, e)| e).find(|e| e.id == id)
    }

    fn find_mut(&mut self, id: &str) -> Option<&mut Entity> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(id))
    }

    fn path_to<'a>(&'a self, id: &str, path: &mut Vec<&'a Entity>) -> bool {
        path.push(self);
        if self.id == id || self.children.iter().any(|c| c.path_to(id, path)) {
            return true;
        }
        path.pop();
        false
    }
}

pub struct Preorder<'a> {
    stack: Vec<(usize, &'a Entity)>,
}

impl<'a> Iterator for Preorder<'a> {
    type Item = (usize, &'a Entity);

    fn next(&mut self) -> Option<Self::Item> {
        let (depth, entity) = self.stack.pop()?;
        self.stack
            .extend(entity.children.iter().rev().map(|c| (depth + 1, c)));
        Some((depth, entity))
    }
}

impl ProtocolDocument {
    pub fn new(root: Entity) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            root,
            source_name: None,
        }
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.root.find(id)
    }

    pub fn entity_mut(&mut self, id: &str) -> Option<&mut Entity> {
        self.root.find_mut(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entity(id).is_some()
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.root.preorder().map(|(_, e)| e)
    }

    pub fn entity_count(&self) -> usize {
        self.root.count()
    }

    /// Entities from the root down to `id`, inclusive. Empty when absent.
    pub fn ancestry(&self, id: &str) -> Vec<&Entity> {
        let mut path = Vec::new();
        self.root.path_to(id, &mut path);
        path
    }

    pub fn parent_of(&self, id: &str) -> Option<&Entity> {
        let path = self.ancestry(id);
        (path.len() >= 2).then(|| path[path.len() - 2])
    }

    /// Slash-joined entity-id path used in diagnostics, e.g. `/root/for-1`.
    pub fn id_path(&self, id: &str) -> String {
        id_path(self.ancestry(id).iter().map(|e| e.id.as_str()))
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        hash_text(&serialize_protocol(self))
    }
}

pub fn hash_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub(crate) fn id_path<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for id in ids {
        out.push('/');
        out.push_str(id);
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ProtocolDocument {
        ProtocolDocument::new(
            Entity::new("p", "P", ROOT_TYPE)
                .with_child(Entity::new("a", "A", "X").with_child(Entity::new("b", "B", "Y")))
                .with_child(Entity::new("c", "C", "Z")),
        )
    }

    #[test]
    fn preorder_order_and_depth() {
        let doc = sample();
        let seen: Vec<_> = doc
            .root
            .preorder()
            .map(|(d, e)| (d, e.id.as_str()))
            .collect();
        assert_eq!(seen, vec![(0, "p"), (1, "a"), (2, "b"), (1, "c")]);
    }

    #[test]
    fn navigation() {
        let doc = sample();
        assert_eq!(doc.parent_of("b").unwrap().id, "a");
        assert!(doc.parent_of("p").is_none());
        assert_eq!(doc.id_path("b"), "/p/a/b");
        assert!(doc.ancestry("nope").is_empty());
        assert_eq!(doc.entity_count(), 4);
    }
}
