use crate::protocol::TypedValue;
use serde::{Deserialize, Serialize};
use std::fmt;

/// One machine-applicable edit. JSON form:
/// `{"op": "set_essential" | "add_entity" | "delete_entity", ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    SetEssential {
        entity_id: String,
        essential_name: String,
        new_value: TypedValue,
    },
    AddEntity {
        template_entity_id: String,
        parent_id: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        overrides: Vec<Override>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        new_name: Option<String>,
    },
    DeleteEntity {
        entity_id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub essential_name: String,
    pub value: TypedValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    SetEssential,
    AddEntity,
    DeleteEntity,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::SetEssential { .. } => ActionKind::SetEssential,
            Action::AddEntity { .. } => ActionKind::AddEntity,
            Action::DeleteEntity { .. } => ActionKind::DeleteEntity,
        }
    }

    /// Entity ids the action requires to exist.
    pub fn referenced_ids(&self) -> Vec<&str> {
        match self {
            Action::SetEssential { entity_id, .. } | Action::DeleteEntity { entity_id } => {
                vec![entity_id]
            }
            Action::AddEntity {
                template_entity_id,
                parent_id,
                ..
            } => vec![template_entity_id, parent_id],
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::SetEssential {
                entity_id,
                essential_name,
                new_value,
            } => write!(
                f,
                "set {essential_name} on {entity_id} to {new_value} ({})",
                new_value.value_type()
            ),
            Action::AddEntity {
                template_entity_id,
                parent_id,
                overrides,
                new_name,
            } => {
                write!(f, "add a copy of {template_entity_id} under {parent_id}")?;
                if let Some(n) = new_name {
                    write!(f, " named '{n}'")?;
                }
                for o in overrides {
                    write!(f, "; {} = {}", o.essential_name, o.value)?;
                }
                Ok(())
            }
            Action::DeleteEntity { entity_id } => write!(f, "delete {entity_id}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let a = Action::SetEssential {
            entity_id: "for-1".into(),
            essential_name: "PatientPositionEssential".into(),
            new_value: TypedValue::enum_token("FaceUpFeetFirst").unwrap(),
        };
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            r#"{"op":"set_essential","entity_id":"for-1","essential_name":"PatientPositionEssential","new_value":{"type":"EnumToken","payload":"FaceUpFeetFirst"}}"#
        );
        let d: Action = serde_json::from_str(r#"{"op":"delete_entity","entity_id":"x"}"#).unwrap();
        assert_eq!(
            d,
            Action::DeleteEntity {
                entity_id: "x".into()
            }
        );
        let add: Action = serde_json::from_str(
            r#"{"op":"add_entity","template_entity_id":"t","parent_id":"p","overrides":[{"essential_name":"K","value":{"type":"EnumToken","payload":"Bl60"}}]}"#,
        )
        .unwrap();
        assert_eq!(add.referenced_ids(), vec!["t", "p"]);
        assert!(serde_json::from_str::<Action>(r#"{"op":"rename","entity_id":"x"}"#).is_err());
        assert!(serde_json::from_str::<Action>(
            r#"{"op":"delete_entity","entity_id":"x","extra":1}"#
        )
        .is_err());
    }
}
