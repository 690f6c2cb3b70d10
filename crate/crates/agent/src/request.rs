use crate::structured::StructuredRequest;
use protoagent_core::edit::ActionKind;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RequestCategory {
    Adding,
    Modification,
    Deleting,
    Others,
}

impl RequestCategory {
    pub const ALL: [RequestCategory; 4] = [
        RequestCategory::Adding,
        RequestCategory::Modification,
        RequestCategory::Deleting,
        RequestCategory::Others,
    ];

    /// Lenient label parsing for model output: accepts the canonical labels
    /// and common verb forms, ignoring case.
    pub fn parse_label(label: &str) -> Option<Self> {
        match label.trim().to_ascii_lowercase().as_str() {
            "adding" | "add" | "addition" | "create" => Some(Self::Adding),
            "modification" | "modify" | "modifying" | "change" | "update" => {
                Some(Self::Modification)
            }
            "deleting" | "delete" | "deletion" | "remove" | "removal" => Some(Self::Deleting),
            "others" | "other" | "none" => Some(Self::Others),
            _ => None,
        }
    }

    pub fn is_dispatchable(self) -> bool {
        self != Self::Others
    }

    /// The only action kind a proposal for this category may contain.
    pub fn action_kind(self) -> Option<ActionKind> {
        match self {
            Self::Adding => Some(ActionKind::AddEntity),
            Self::Modification => Some(ActionKind::SetEssential),
            Self::Deleting => Some(ActionKind::DeleteEntity),
            Self::Others => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Adding => "Adding",
            Self::Modification => "Modification",
            Self::Deleting => "Deleting",
            Self::Others => "Others",
        }
    }
}

impl fmt::Display for RequestCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    NaturalLanguage,
    StructuredJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubRequest {
    pub text: String,
    pub category: RequestCategory,
    pub rationale: String,
    pub origin: Origin,
    /// The parsed request when it came in as structured JSON.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<StructuredRequest>,
}

impl SubRequest {
    pub fn is_dispatchable(&self) -> bool {
        self.category.is_dispatchable()
    }
}
