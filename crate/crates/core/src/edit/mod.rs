//! The agent's tool set: entity retrieval, essential management and
//! transactional application of planned actions.
//!
//! Every operation takes the document by reference and returns a new one, so a
//! failed edit can never leave a half-modified document behind.

mod action;
mod query;

pub use action::{Action, ActionKind, Override};
pub use query::{get_essentials, retrieve_entities, EntityQuery, EntityRef, DEFAULT_MAX_RESULTS};

/// JSON Schema (draft 7) of the action encoding.
pub const ACTION_SCHEMA: &str = include_str!("../../schemas/action.schema.json");

use crate::protocol::{
    validate_document, Entity, Essential, ProtocolDocument, RuleSet, SyntaxOptions, TypedValue,
    ValueType, Vocabulary,
};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EditError {
    #[error("query needs at least one of type_filter, name_contains or keyword")]
    EmptyQuery,
    #[error("unknown entity '{0}'")]
    UnknownEntity(String),
    #[error(
        "essential '{essential}' is not present on '{entity_id}' and not registered for its type"
    )]
    UnknownEssential {
        entity_id: String,
        essential: String,
    },
    #[error("essential '{essential}' holds {expected} values, got {found}")]
    TypeMismatch {
        essential: String,
        expected: ValueType,
        found: ValueType,
    },
    #[error("value '{value}' is not allowed for {essential}")]
    ValueNotAllowed { essential: String, value: String },
    #[error("{child_type} may not be placed under {parent_type}")]
    PlacementNotAllowed {
        child_type: String,
        parent_type: String,
    },
    #[error("the root entity cannot be deleted")]
    CannotDeleteRoot,
    #[error("edit produced an invalid document: {0}")]
    InvalidResult(String),
    #[error("action {index} failed: {source}")]
    ActionFailed {
        index: usize,
        #[source]
        source: Box<EditError>,
    },
}

impl EditError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EditError::EmptyQuery => "EMPTY_QUERY",
            EditError::UnknownEntity(_) => "UNKNOWN_ENTITY",
            EditError::UnknownEssential { .. } => "UNKNOWN_ESSENTIAL",
            EditError::TypeMismatch { .. } => "TYPE_MISMATCH",
            EditError::ValueNotAllowed { .. } => "VALUE_NOT_ALLOWED",
            EditError::PlacementNotAllowed { .. } => "PLACEMENT_NOT_ALLOWED",
            EditError::CannotDeleteRoot => "CANNOT_DELETE_ROOT",
            EditError::InvalidResult(_) => "INVALID_RESULT",
            EditError::ActionFailed { source, .. } => source.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum SideEffect {
    /// A compound parent left without children was removed.
    ParentRemoved(String),
    /// A copied entity received a fresh id: `{template id} -> {new id}`.
    IdAssigned { from: String, to: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditResult {
    pub document: ProtocolDocument,
    pub applied: Vec<Action>,
    pub side_effects: Vec<SideEffect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOptions {
    /// Reject unregistered essentials and unregistered entity types.
    pub strict: bool,
    /// Create a missing essential on `set_essential` instead of failing.
    pub create_missing: bool,
    /// Check new values against the rule set's allowed values.
    pub check_values: bool,
}

impl Default for EditOptions {
    fn default() -> Self {
        Self {
            strict: false,
            create_missing: true,
            check_values: false,
        }
    }
}

/// Edit operations bound to a vocabulary, a rule set and options.
#[derive(Debug, Clone)]
pub struct Toolset {
    pub vocabulary: Vocabulary,
    pub rules: RuleSet,
    pub options: EditOptions,
}

impl Default for Toolset {
    /// Builtin vocabulary and rules, default options.
    fn default() -> Self {
        Self::new(
            Vocabulary::builtin(),
            RuleSet::builtin(),
            EditOptions::default(),
        )
    }
}

impl Toolset {
    pub fn new(vocabulary: Vocabulary, rules: RuleSet, options: EditOptions) -> Self {
        Self {
            vocabulary,
            rules,
            options,
        }
    }

    pub fn syntax_options(&self) -> SyntaxOptions {
        SyntaxOptions {
            strict: self.options.strict,
            vocabulary: self.vocabulary.clone(),
        }
    }

    pub fn set_essential(
        &self,
        doc: &ProtocolDocument,
        entity_id: &str,
        essential_name: &str,
        new_value: &TypedValue,
    ) -> Result<ProtocolDocument, EditError> {
        let mut out = doc.clone();
        let entity = out
            .entity_mut(entity_id)
            .ok_or_else(|| EditError::UnknownEntity(entity_id.to_string()))?;
        self.write_essential(entity, essential_name, new_value)?;
        Ok(out)
    }

    fn write_essential(
        &self,
        entity: &mut Entity,
        name: &str,
        value: &TypedValue,
    ) -> Result<(), EditError> {
        let registered = self
            .vocabulary
            .essential(&entity.entity_type, name)
            .map(|s| s.value_type);
        let expected = match entity.essential(name) {
            Some(existing) => Some(existing.value.value_type()),
            None => {
                let may_create =
                    self.options.create_missing && (registered.is_some() || !self.options.strict);
                if !may_create {
                    return Err(EditError::UnknownEssential {
                        entity_id: entity.id.clone(),
                        essential: name.to_string(),
                    });
                }
                registered
            }
        };
        if let Some(expected) = expected {
            if expected != value.value_type() {
                return Err(EditError::TypeMismatch {
                    essential: name.to_string(),
                    expected,
                    found: value.value_type(),
                });
            }
        }
        if self.options.check_values && !self.rules.value_allowed(name, value) {
            return Err(EditError::ValueNotAllowed {
                essential: name.to_string(),
                value: value.to_string(),
            });
        }
        match entity.essentials.iter_mut().find(|e| e.name == name) {
            Some(e) => e.value = value.clone(),
            None => entity.essentials.push(Essential::new(name, value.clone())),
        }
        Ok(())
    }

    /// Deep-copies the template subtree, appends it as the parent's last child
    /// and gives every copied entity a fresh `<id>-copy-<n>` id.
    pub fn add_entity_from_template(
        &self,
        doc: &ProtocolDocument,
        template_entity_id: &str,
        parent_id: &str,
        overrides: &[Override],
        new_name: Option<&str>,
    ) -> Result<EditResult, EditError> {
        let template = doc
            .entity(template_entity_id)
            .ok_or_else(|| EditError::UnknownEntity(template_entity_id.to_string()))?;
        let parent = doc
            .entity(parent_id)
            .ok_or_else(|| EditError::UnknownEntity(parent_id.to_string()))?;
        if !self
            .rules
            .placement_allowed(&template.entity_type, &parent.entity_type)
        {
            return Err(EditError::PlacementNotAllowed {
                child_type: template.entity_type.clone(),
                parent_type: parent.entity_type.clone(),
            });
        }

        let mut copy = template.clone();
        let mut taken: HashSet<String> = doc.entities().map(|e| e.id.clone()).collect();
        let mut side_effects = Vec::new();
        assign_fresh_ids(&mut copy, &mut taken, &mut side_effects);
        if let Some(name) = new_name {
            copy.name = name.to_string();
        }
        for o in overrides {
            self.write_essential(&mut copy, &o.essential_name, &o.value)?;
        }

        let mut out = doc.clone();
        out.entity_mut(parent_id)
            .expect("parent was found above")
            .children
            .push(copy);
        Ok(EditResult {
            document: out,
            applied: vec![Action::AddEntity {
                template_entity_id: template_entity_id.to_string(),
                parent_id: parent_id.to_string(),
                overrides: overrides.to_vec(),
                new_name: new_name.map(str::to_string),
            }],
            side_effects,
        })
    }

    /// Removes the entity's subtree, then removes each compound ancestor the
    /// removal leaves without children, walking upwards.
    pub fn delete_entity(
        &self,
        doc: &ProtocolDocument,
        entity_id: &str,
    ) -> Result<EditResult, EditError> {
        if doc.root.id == entity_id {
            return Err(EditError::CannotDeleteRoot);
        }
        let ancestry: Vec<String> = doc
            .ancestry(entity_id)
            .iter()
            .map(|e| e.id.clone())
            .collect();
        if ancestry.is_empty() {
            return Err(EditError::UnknownEntity(entity_id.to_string()));
        }

        let mut out = doc.clone();
        let mut side_effects = Vec::new();
        // ancestry = [root, ..., parent, target]
        let mut removed = ancestry.len() - 1;
        loop {
            let parent = out
                .entity_mut(&ancestry[removed - 1])
                .expect("ancestors exist until removed");
            parent.children.retain(|c| c.id != ancestry[removed]);
            let cascade = removed - 1 > 0
                && parent.children.is_empty()
                && self.rules.is_compound(&parent.entity_type);
            if !cascade {
                break;
            }
            side_effects.push(SideEffect::ParentRemoved(parent.id.clone()));
            removed -= 1;
        }
        Ok(EditResult {
            document: out,
            applied: vec![Action::DeleteEntity {
                entity_id: entity_id.to_string(),
            }],
            side_effects,
        })
    }

    pub fn apply(&self, doc: &ProtocolDocument, action: &Action) -> Result<EditResult, EditError> {
        match action {
            Action::SetEssential {
                entity_id,
                essential_name,
                new_value,
            } => Ok(EditResult {
                document: self.set_essential(doc, entity_id, essential_name, new_value)?,
                applied: vec![action.clone()],
                side_effects: Vec::new(),
            }),
            Action::AddEntity {
                template_entity_id,
                parent_id,
                overrides,
                new_name,
            } => self.add_entity_from_template(
                doc,
                template_entity_id,
                parent_id,
                overrides,
                new_name.as_deref(),
            ),
            Action::DeleteEntity { entity_id } => self.delete_entity(doc, entity_id),
        }
    }

    /// Applies actions in order against the evolving document. Either every
    /// action succeeds and the result passes syntax validation, or the error
    /// of the first failing action is returned with its index.
    pub fn apply_actions(
        &self,
        doc: &ProtocolDocument,
        actions: &[Action],
    ) -> Result<EditResult, EditError> {
        let mut current = doc.clone();
        let mut applied = Vec::with_capacity(actions.len());
        let mut side_effects = Vec::new();
        for (index, action) in actions.iter().enumerate() {
            let step = self
                .apply(&current, action)
                .map_err(|e| EditError::ActionFailed {
                    index,
                    source: Box::new(e),
                })?;
            current = step.document;
            applied.extend(step.applied);
            side_effects.extend(step.side_effects);
        }
        let report = validate_document(&current, &self.syntax_options());
        if !report.ok {
            let first = report
                .errors()
                .next()
                .map(|i| i.to_string())
                .unwrap_or_default();
            return Err(EditError::InvalidResult(first));
        }
        Ok(EditResult {
            document: current,
            applied,
            side_effects,
        })
    }
}

fn assign_fresh_ids(
    entity: &mut Entity,
    taken: &mut HashSet<String>,
    side_effects: &mut Vec<SideEffect>,
) {
    let base = entity.id.clone();
    let fresh = (1..)
        .map(|n| format!("{base}-copy-{n}"))
        .find(|candidate| !taken.contains(candidate))
        .expect("unbounded search finds a free id");
    taken.insert(fresh.clone());
    side_effects.push(SideEffect::IdAssigned {
        from: base,
        to: fresh.clone(),
    });
    entity.id = fresh;
    for child in &mut entity.children {
        assign_fresh_ids(child, taken, side_effects);
    }
}
