//! Scan-protocol documents and the edit tool set used by the protocol agent.
//!
//! [`protocol`] holds the document model, canonical XML, syntax and structure
//! validation and the simplified tree outline. [`edit`] holds entity retrieval
//! and the transactional edit operations.

pub mod edit;
pub mod protocol;

#[cfg(feature = "test-support")]
pub mod testing;

pub use edit::{Action, EditError, EditOptions, EditResult, EntityQuery, EntityRef, Toolset};
pub use protocol::{
    parse_protocol, serialize_protocol, validate_structure, validate_syntax, Entity, Essential,
    ProtocolDocument, RuleSet, TypedValue, ValidationReport, ValueType, Vocabulary,
};
