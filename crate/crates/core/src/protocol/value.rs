//! Typed essential values.
//!
//! A value is a type tag plus a payload. Scalar payloads are stored trimmed,
//! which is also how the XML reader sees them, so construction and parsing
//! agree on one canonical form.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValueType {
    Decimal,
    Integer,
    Boolean,
    String,
    EnumToken,
    Composite,
}

impl ValueType {
    pub const ALL: [ValueType; 6] = [
        ValueType::Decimal,
        ValueType::Integer,
        ValueType::Boolean,
        ValueType::String,
        ValueType::EnumToken,
        ValueType::Composite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::Decimal => "Decimal",
            ValueType::Integer => "Integer",
            ValueType::Boolean => "Boolean",
            ValueType::String => "String",
            ValueType::EnumToken => "EnumToken",
            ValueType::Composite => "Composite",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == tag)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, ValueType::Decimal | ValueType::Integer)
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One element of a composite value tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeNode {
    pub name: String,
    #[serde(flatten)]
    pub content: NodeContent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeContent {
    Text(String),
    Children(Vec<CompositeNode>),
}

impl CompositeNode {
    pub fn text(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            content: NodeContent::Text(text.into()),
        }
    }

    pub fn branch(name: impl Into<String>, children: Vec<CompositeNode>) -> Self {
        Self {
            name: name.into(),
            content: NodeContent::Children(children),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Scalar(String),
    Composite(Vec<CompositeNode>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("'{0}' is not a decimal number")]
    NotADecimal(String),
    #[error("'{0}' is not an integer")]
    NotAnInteger(String),
    #[error("'{0}' is not a boolean (expected true or false)")]
    NotABoolean(String),
    #[error("'{0}' is not an enum token ([A-Za-z0-9_]+)")]
    BadEnumToken(String),
    #[error("string payload contains a character not representable in XML")]
    BadCharacter,
    #[error("{0} value needs a scalar payload")]
    ExpectedScalar(ValueType),
    #[error("composite value needs a non-empty element payload")]
    ExpectedComposite,
    #[error("'{0}' is not a valid element name")]
    BadElementName(String),
}

/// An essential's value: declared type tag plus a payload matching it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTypedValue", into = "RawTypedValue")]
pub struct TypedValue {
    value_type: ValueType,
    payload: Payload,
}

#[derive(Serialize, Deserialize)]
struct RawTypedValue {
    #[serde(rename = "type")]
    value_type: ValueType,
    payload: Payload,
}

impl TryFrom<RawTypedValue> for TypedValue {
    type Error = ValueError;

    fn try_from(raw: RawTypedValue) -> Result<Self, Self::Error> {
        TypedValue::new(raw.value_type, raw.payload)
    }
}

impl From<TypedValue> for RawTypedValue {
    fn from(v: TypedValue) -> Self {
        RawTypedValue {
            value_type: v.value_type,
            payload: v.payload,
        }
    }
}

impl TypedValue {
    pub fn new(value_type: ValueType, payload: Payload) -> Result<Self, ValueError> {
        let payload = match (value_type, payload) {
            (ValueType::Composite, Payload::Composite(nodes)) => {
                if nodes.is_empty() {
                    return Err(ValueError::ExpectedComposite);
                }
                Payload::Composite(normalize_nodes(nodes)?)
            }
            (ValueType::Composite, Payload::Scalar(_)) => {
                return Err(ValueError::ExpectedComposite)
            }
            (t, Payload::Composite(_)) => return Err(ValueError::ExpectedScalar(t)),
            (t, Payload::Scalar(text)) => {
                let text = text.trim().to_string();
                check_scalar(t, &text)?;
                Payload::Scalar(text)
            }
        };
        Ok(Self {
            value_type,
            payload,
        })
    }

    pub fn scalar(value_type: ValueType, text: impl Into<String>) -> Result<Self, ValueError> {
        Self::new(value_type, Payload::Scalar(text.into()))
    }

    pub fn composite(nodes: Vec<CompositeNode>) -> Result<Self, ValueError> {
        Self::new(ValueType::Composite, Payload::Composite(nodes))
    }

    pub fn enum_token(token: &str) -> Result<Self, ValueError> {
        Self::scalar(ValueType::EnumToken, token)
    }

    pub fn decimal(text: &str) -> Result<Self, ValueError> {
        Self::scalar(ValueType::Decimal, text)
    }

    pub fn value_type(&self) -> ValueType {
        self.value_type
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn as_scalar(&self) -> Option<&str> {
        match &self.payload {
            Payload::Scalar(s) => Some(s),
            Payload::Composite(_) => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        if self.value_type.is_numeric() {
            self.as_scalar().and_then(|s| s.parse().ok())
        } else {
            None
        }
    }

    /// Every piece of text carried by the value, for free-text matching.
    pub fn text_fragments(&self) -> Vec<&str> {
        fn walk<'a>(nodes: &'a [CompositeNode], out: &mut Vec<&'a str>) {
            for n in nodes {
                out.push(&n.name);
                match &n.content {
                    NodeContent::Text(t) => out.push(t),
                    NodeContent::Children(c) => walk(c, out),
                }
            }
        }
        match &self.payload {
            Payload::Scalar(s) => vec![s.as_str()],
            Payload::Composite(nodes) => {
                let mut out = Vec::new();
                walk(nodes, &mut out);
                out
            }
        }
    }
}

impl fmt::Display for TypedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn write_nodes(nodes: &[CompositeNode], f: &mut fmt::Formatter<'_>) -> fmt::Result {
            for (i, n) in nodes.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                match &n.content {
                    NodeContent::Text(t) => write!(f, "{}={}", n.name, t)?,
                    NodeContent::Children(c) => {
                        write!(f, "{}(", n.name)?;
                        write_nodes(c, f)?;
                        f.write_str(")")?;
                    }
                }
            }
            Ok(())
        }
        match &self.payload {
            Payload::Scalar(s) => f.write_str(s),
            Payload::Composite(nodes) => write_nodes(nodes, f),
        }
    }
}

fn normalize_nodes(nodes: Vec<CompositeNode>) -> Result<Vec<CompositeNode>, ValueError> {
    nodes
        .into_iter()
        .map(|n| {
            if !is_element_name(&n.name) {
                return Err(ValueError::BadElementName(n.name));
            }
            let content = match n.content {
                NodeContent::Text(t) => {
                    let t = t.trim().to_string();
                    if !is_xml_text(&t) {
                        return Err(ValueError::BadCharacter);
                    }
                    NodeContent::Text(t)
                }
                // An element without children reads back as empty text.
                NodeContent::Children(c) if c.is_empty() => NodeContent::Text(String::new()),
                NodeContent::Children(c) => NodeContent::Children(normalize_nodes(c)?),
            };
            Ok(CompositeNode {
                name: n.name,
                content,
            })
        })
        .collect()
}

fn check_scalar(value_type: ValueType, text: &str) -> Result<(), ValueError> {
    match value_type {
        ValueType::Decimal => {
            let ok = is_decimal_literal(text)
                && text.parse::<f64>().map(f64::is_finite).unwrap_or(false);
            if !ok {
                return Err(ValueError::NotADecimal(text.to_string()));
            }
        }
        ValueType::Integer => {
            if text.parse::<i64>().is_err() {
                return Err(ValueError::NotAnInteger(text.to_string()));
            }
        }
        ValueType::Boolean => {
            if text != "true" && text != "false" {
                return Err(ValueError::NotABoolean(text.to_string()));
            }
        }
        ValueType::EnumToken => {
            if !is_enum_token(text) {
                return Err(ValueError::BadEnumToken(text.to_string()));
            }
        }
        ValueType::String => {
            if !is_xml_text(text) {
                return Err(ValueError::BadCharacter);
            }
        }
        ValueType::Composite => unreachable!("composite handled by caller"),
    }
    Ok(())
}

// Plain decimal notation only; rejects "inf", "NaN" and hex forms that
// `f64::from_str` would otherwise accept.
fn is_decimal_literal(s: &str) -> bool {
    let s = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], Some(&s[i + 1..])),
        None => (s, None),
    };
    let mut parts = mantissa.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = match frac {
        Some(f) => (int.is_empty() || digits(int)) && digits(f) || digits(int) && f.is_empty(),
        None => digits(int),
    };
    let exponent_ok = exponent.is_none_or(|e| digits(e.strip_prefix(['+', '-']).unwrap_or(e)));
    mantissa_ok && exponent_ok
}

pub fn is_enum_token(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

pub(crate) fn is_element_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    // "xml"-prefixed names are reserved.
    !s.to_ascii_lowercase().starts_with("xml")
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

pub(crate) fn is_xml_text(s: &str) -> bool {
    s.chars().all(|c| {
        matches!(c, '\t' | '\n' | '\r') || (c >= ' ' && c != '\u{FFFE}' && c != '\u{FFFF}')
    })
}
