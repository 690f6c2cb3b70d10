//! Syntax validation: the offline stand-in for a scanner's protocol browser.
//!
//! A text is syntactically valid when it is well-formed XML that follows the
//! protocol schema. Strict mode additionally requires every entity type to be
//! registered in the vocabulary and registered essentials to carry their
//! declared value type.

use super::report::{Issue, ValidationReport};
use super::vocabulary::Vocabulary;
use super::xml::{read_document, serialize_protocol};
use super::ProtocolDocument;

#[derive(Debug, Clone, Default)]
pub struct SyntaxOptions {
    pub strict: bool,
    pub vocabulary: Vocabulary,
}

impl SyntaxOptions {
    pub fn strict() -> Self {
        Self {
            strict: true,
            ..Self::default()
        }
    }
}

pub fn validate_syntax(xml_text: &str, options: &SyntaxOptions) -> ValidationReport {
    let (doc, mut issues) = match read_document(xml_text) {
        Ok(read) => read,
        Err(e) => return ValidationReport::from_issues(vec![e.to_issue()]),
    };
    if let Some(doc) = &doc {
        issues.extend(vocabulary_issues(doc, options));
    }
    ValidationReport::from_issues(issues)
}

/// Validates an in-memory document by its canonical serialization.
pub fn validate_document(doc: &ProtocolDocument, options: &SyntaxOptions) -> ValidationReport {
    validate_syntax(&serialize_protocol(doc), options)
}

fn vocabulary_issues(doc: &ProtocolDocument, options: &SyntaxOptions) -> Vec<Issue> {
    let vocab = &options.vocabulary;
    let mut issues = Vec::new();
    for entity in doc.entities() {
        let path = || doc.id_path(&entity.id);
        if !vocab.is_registered(&entity.entity_type) {
            let message = format!("entity type '{}' is not registered", entity.entity_type);
            issues.push(if options.strict {
                Issue::error("UNKNOWN_TYPE", path(), message)
            } else {
                Issue::warning("UNKNOWN_TYPE", path(), message)
            });
            continue;
        }
        for essential in &entity.essentials {
            match vocab.essential(&entity.entity_type, &essential.name) {
                None => issues.push(Issue::warning(
                    "UNKNOWN_ESSENTIAL",
                    path(),
                    format!(
                        "essential '{}' is not registered for {}",
                        essential.name, entity.entity_type
                    ),
                )),
                Some(spec) if spec.value_type != essential.value.value_type() => {
                    let message = format!(
                        "essential '{}' is declared {} but holds {}",
                        essential.name,
                        spec.value_type,
                        essential.value.value_type()
                    );
                    issues.push(if options.strict {
                        Issue::error("ESSENTIAL_TYPE_MISMATCH", path(), message)
                    } else {
                        Issue::warning("ESSENTIAL_TYPE_MISMATCH", path(), message)
                    });
                }
                Some(_) => {}
            }
        }
    }
    issues
}
