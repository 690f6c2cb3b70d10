//! Declarative structure rules and `validate_structure`.
//!
//! The rule file is JSON:
//!
//! ```json
//! {
//!   "version": "1",
//!   "compound_types": ["StandardReconCompoundEntity"],
//!   "allowed_values": {
//!     "KernelEssential": ["Br40", "Bl60"],
//!     "SliceThicknessEssential": [{"min": 0.5, "max": 10.0}]
//!   },
//!   "dependencies": [
//!     {"id": "lung-kernel-thin-slices",
//!      "when": {"entity_type": "CTReconEntity", "essential": "KernelEssential", "in": ["Bl60"]},
//!      "require": {"essential": "SliceThicknessEssential", "max": 2.0}}
//!   ],
//!   "placement": {"CTReconEntity": ["StandardReconCompoundEntity"]}
//! }
//! ```
//!
//! `placement` maps a child entity type to the parent types that may hold it.
//! Types without a placement entry may appear anywhere.

use super::report::{Issue, ValidationReport};
use super::{Entity, ProtocolDocument, TypedValue};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

const BUILTIN: &str = include_str!("../../assets/rules_v1.json");

#[derive(Debug, Error)]
pub enum RuleSetError {
    #[error("rule file is not valid JSON for the rule schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid rule at {path}: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AllowedValue {
    Token(String),
    Range {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_type: Option<String>,
    pub essential: String,
    #[serde(default, rename = "in", skip_serializing_if = "Vec::is_empty")]
    pub one_of: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Requirement {
    pub essential: String,
    #[serde(default, rename = "in", skip_serializing_if = "Vec::is_empty")]
    pub one_of: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dependency {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub when: Condition,
    pub require: Requirement,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSet {
    #[serde(default)]
    pub version: String,
    #[serde(default)]
    pub compound_types: BTreeSet<String>,
    #[serde(default)]
    pub allowed_values: BTreeMap<String, Vec<AllowedValue>>,
    #[serde(default)]
    pub dependencies: Vec<Dependency>,
    #[serde(default)]
    pub placement: BTreeMap<String, BTreeSet<String>>,
}

impl RuleSet {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("builtin rule file is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, RuleSetError> {
        let rules: RuleSet = serde_json::from_str(text)?;
        rules.check()?;
        Ok(rules)
    }

    fn check(&self) -> Result<(), RuleSetError> {
        let invalid = |path: String, message: &str| RuleSetError::Invalid {
            path,
            message: message.to_string(),
        };
        if self.compound_types.iter().any(|t| t.is_empty()) {
            return Err(invalid(
                "/compound_types".into(),
                "type names must not be empty",
            ));
        }
        for (name, values) in &self.allowed_values {
            let path = format!("/allowed_values/{name}");
            if values.is_empty() {
                return Err(invalid(path, "allowed value list must not be empty"));
            }
            for (i, v) in values.iter().enumerate() {
                match v {
                    AllowedValue::Token(t) if t.is_empty() => {
                        return Err(invalid(format!("{path}/{i}"), "token must not be empty"))
                    }
                    AllowedValue::Range {
                        min: None,
                        max: None,
                    } => return Err(invalid(format!("{path}/{i}"), "range needs min or max")),
                    AllowedValue::Range {
                        min: Some(lo),
                        max: Some(hi),
                    } if lo > hi => {
                        return Err(invalid(format!("{path}/{i}"), "range min exceeds max"))
                    }
                    _ => {}
                }
            }
        }
        for (i, dep) in self.dependencies.iter().enumerate() {
            let path = format!("/dependencies/{i}");
            if dep.when.essential.is_empty() || dep.require.essential.is_empty() {
                return Err(invalid(path, "when and require must name an essential"));
            }
            let r = &dep.require;
            if r.one_of.is_empty() && r.min.is_none() && r.max.is_none() {
                return Err(invalid(
                    format!("{path}/require"),
                    "requirement needs 'in', 'min' or 'max'",
                ));
            }
            if let (Some(lo), Some(hi)) = (r.min, r.max) {
                if lo > hi {
                    return Err(invalid(format!("{path}/require"), "min exceeds max"));
                }
            }
        }
        Ok(())
    }

    pub fn is_compound(&self, entity_type: &str) -> bool {
        self.compound_types.contains(entity_type)
    }

    pub fn placement_allowed(&self, child_type: &str, parent_type: &str) -> bool {
        self.placement
            .get(child_type)
            .is_none_or(|parents| parents.contains(parent_type))
    }

    /// Whether `value` is acceptable for `essential`. Essentials without an
    /// allowed-value entry, and composite values, always pass.
    pub fn value_allowed(&self, essential: &str, value: &TypedValue) -> bool {
        let Some(allowed) = self.allowed_values.get(essential) else {
            return true;
        };
        let Some(text) = value.as_scalar() else {
            return true;
        };
        let number = value.as_f64();
        allowed.iter().any(|a| match a {
            AllowedValue::Token(t) => t == text,
            AllowedValue::Range { min, max } => {
                number.is_some_and(|n| min.is_none_or(|lo| n >= lo) && max.is_none_or(|hi| n <= hi))
            }
        })
    }
}

impl Condition {
    fn holds(&self, entity: &Entity) -> bool {
        if self
            .entity_type
            .as_ref()
            .is_some_and(|t| *t != entity.entity_type)
        {
            return false;
        }
        let Some(e) = entity.essential(&self.essential) else {
            return false;
        };
        self.one_of.is_empty()
            || e.value
                .as_scalar()
                .is_some_and(|v| self.one_of.iter().any(|t| t == v))
    }
}

impl Requirement {
    fn satisfied(&self, entity: &Entity) -> bool {
        let Some(e) = entity.essential(&self.essential) else {
            return false;
        };
        let Some(text) = e.value.as_scalar() else {
            return false;
        };
        if !self.one_of.is_empty() && !self.one_of.iter().any(|t| t == text) {
            return false;
        }
        if self.min.is_some() || self.max.is_some() {
            let Some(n) = e.value.as_f64() else {
                return false;
            };
            if self.min.is_some_and(|lo| n < lo) || self.max.is_some_and(|hi| n > hi) {
                return false;
            }
        }
        true
    }

    fn describe(&self) -> String {
        let mut parts = Vec::new();
        if !self.one_of.is_empty() {
            parts.push(format!("one of [{}]", self.one_of.join(", ")));
        }
        if let Some(lo) = self.min {
            parts.push(format!(">= {lo}"));
        }
        if let Some(hi) = self.max {
            parts.push(format!("<= {hi}"));
        }
        format!("{} {}", self.essential, parts.join(" and "))
    }
}

/// Checks a document against the rule set: no empty compound entities,
/// allowed values, dependency rules and placement.
pub fn validate_structure(doc: &ProtocolDocument, rules: &RuleSet) -> ValidationReport {
    let mut issues = Vec::new();
    let mut walk = vec![(&doc.root, None::<&Entity>)];
    while let Some((entity, parent)) = walk.pop() {
        let path = || doc.id_path(&entity.id);
        if rules.is_compound(&entity.entity_type) && entity.children.is_empty() {
            issues.push(Issue::error(
                "EMPTY_COMPOUND",
                path(),
                format!(
                    "compound entity '{}' ({}) has no children",
                    entity.name, entity.entity_type
                ),
            ));
        }
        if let Some(parent) = parent {
            if !rules.placement_allowed(&entity.entity_type, &parent.entity_type) {
                issues.push(Issue::error(
                    "PLACEMENT_NOT_ALLOWED",
                    path(),
                    format!(
                        "{} may not be placed under {}",
                        entity.entity_type, parent.entity_type
                    ),
                ));
            }
        }
        for essential in &entity.essentials {
            if !rules.value_allowed(&essential.name, &essential.value) {
                issues.push(Issue::error(
                    "VALUE_NOT_ALLOWED",
                    path(),
                    format!(
                        "value '{}' is not allowed for {}",
                        essential.value, essential.name
                    ),
                ));
            }
        }
        for dep in &rules.dependencies {
            if dep.when.holds(entity) && !dep.require.satisfied(entity) {
                let label = dep.id.as_deref().unwrap_or("dependency");
                issues.push(Issue::error(
                    "DEPENDENCY_VIOLATED",
                    path(),
                    format!(
                        "{label}: when {} is set as specified, {} is required",
                        dep.when.essential,
                        dep.require.describe()
                    ),
                ));
            }
        }
        walk.extend(entity.children.iter().rev().map(|c| (c, Some(entity))));
    }
    ValidationReport::from_issues(issues)
}
