use protoagent_core::protocol::serialize_entity;
use protoagent_core::{Entity, ProtocolDocument};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Canonical XML of each affected subtree, keyed by the subtree root id.
pub type Segments = BTreeMap<String, String>;

/// Everything about an entity except its descendants' contents.
fn signature(e: &Entity) -> (&str, &str, &[protoagent_core::Essential], Vec<&str>) {
    (
        &e.name,
        &e.entity_type,
        &e.essentials,
        e.children.iter().map(|c| c.id.as_str()).collect(),
    )
}

/// The affected subtrees of an edit: entities of `after` that are new or
/// whose own name, type, essentials or child list changed, reduced to the
/// topmost ones and serialized from `after`. A deletion shows up through
/// the surviving parent whose child list shrank.
pub fn affected_segments(before: &ProtocolDocument, after: &ProtocolDocument) -> Segments {
    let old: HashMap<&str, &Entity> = before.entities().map(|e| (e.id.as_str(), e)).collect();
    let changed: HashSet<&str> = after
        .entities()
        .filter(|e| {
            old.get(e.id.as_str())
                .is_none_or(|o| signature(o) != signature(e))
        })
        .map(|e| e.id.as_str())
        .collect();
    after
        .entities()
        .filter(|e| changed.contains(e.id.as_str()))
        .filter(|e| {
            let ancestry = after.ancestry(&e.id);
            !ancestry[..ancestry.len() - 1]
                .iter()
                .any(|a| changed.contains(a.id.as_str()))
        })
        .map(|e| (e.id.clone(), serialize_entity(e, true)))
        .collect()
}
