//! Registered entity types and the essentials each type declares.
//!
//! The shipped vocabulary covers the entity types and essentials a thorax
//! protocol uses; it is an extrapolation, not a vendor catalogue.

use super::ValueType;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const BUILTIN: &str = include_str!("../../assets/vocabulary_v1.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssentialSpec {
    pub value_type: ValueType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub version: String,
    pub entity_types: BTreeMap<String, BTreeMap<String, EssentialSpec>>,
}

impl Vocabulary {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("builtin vocabulary is valid JSON")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn is_registered(&self, entity_type: &str) -> bool {
        self.entity_types.contains_key(entity_type)
    }

    pub fn essential(&self, entity_type: &str, essential: &str) -> Option<&EssentialSpec> {
        self.entity_types.get(entity_type)?.get(essential)
    }

    /// Looks an essential up across all types, for units and types of
    /// essentials attached to unregistered entity types.
    pub fn any_essential(&self, essential: &str) -> Option<&EssentialSpec> {
        self.entity_types.values().find_map(|m| m.get(essential))
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.entity_types.keys().map(String::as_str)
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::builtin()
    }
}
