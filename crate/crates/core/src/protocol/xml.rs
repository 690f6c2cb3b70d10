//! XML reading and canonical writing.
//!
//! Element layout:
//!
//! ```xml
//! <ScanProtocol id="..." name="..." schemaVersion="1.0">
//!   <Essential>
//!     <Name>BodyRegionEssential</Name>
//!     <Value type="EnumToken">Thorax</Value>
//!   </Essential>
//!   <Entity id="..." name="..." type="FrameOfReferenceEntity">
//!     ...
//!   </Entity>
//! </ScanProtocol>
//! ```
//!
//! The canonical form uses 2-space indentation, the attribute order
//! id, name, type (root: id, name, schemaVersion, source), essentials before
//! child entities, self-closing tags for empty elements, and a trailing newline.

use super::report::Issue;
use super::value::{is_element_name, CompositeNode, NodeContent, Payload, TypedValue, ValueType};
use super::{id_path, Entity, Essential, ProtocolDocument, ROOT_TYPE};
use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("XML syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("schema error [{code}] at {path}: {message}")]
    Schema {
        code: String,
        path: String,
        line: Option<u32>,
        column: Option<u32>,
        message: String,
    },
}

impl ParseError {
    pub fn code(&self) -> &str {
        match self {
            ParseError::Syntax { .. } => "XML_SYNTAX",
            ParseError::Schema { code, .. } => code,
        }
    }

    pub fn to_issue(&self) -> Issue {
        match self {
            ParseError::Syntax {
                line,
                column,
                message,
            } => Issue::error("XML_SYNTAX", format!("{line}:{column}"), message.clone())
                .at(*line, *column),
            ParseError::Schema {
                code,
                path,
                line,
                column,
                message,
            } => {
                let mut issue = Issue::error(code, path.clone(), message.clone());
                issue.line = *line;
                issue.column = *column;
                issue
            }
        }
    }
}

/// Parses protocol XML into a document.
///
/// Entity types are not checked against the vocabulary here; see
/// [`validate_syntax`](super::validate_syntax) for strict checking.
pub fn parse_protocol(xml_text: &str) -> Result<ProtocolDocument, ParseError> {
    let (doc, issues) = read_document(xml_text)?;
    if let Some(first) = issues.into_iter().next() {
        return Err(ParseError::Schema {
            code: first.code,
            path: first.path,
            line: first.line,
            column: first.column,
            message: first.message,
        });
    }
    Ok(doc.expect("a document is produced whenever no schema issue is raised"))
}

/// Reads XML, collecting every schema-level problem instead of stopping at
/// the first one. Returns `Err` only for well-formedness errors.
pub(crate) fn read_document(
    xml_text: &str,
) -> Result<(Option<ProtocolDocument>, Vec<Issue>), ParseError> {
    let xml = roxmltree::Document::parse(xml_text).map_err(|e| {
        let pos = e.pos();
        ParseError::Syntax {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let mut reader = Reader {
        xml: &xml,
        issues: Vec::new(),
        ids: HashSet::new(),
    };
    let doc = reader.read_root(xml.root_element());
    Ok((doc, reader.issues))
}

struct Reader<'x, 'input> {
    xml: &'x roxmltree::Document<'input>,
    issues: Vec<Issue>,
    ids: HashSet<String>,
}

type Node<'x, 'input> = roxmltree::Node<'x, 'input>;

impl<'x, 'input> Reader<'x, 'input> {
    fn issue(&mut self, node: Node, code: &str, path: &[String], message: String) {
        let pos = self.xml.text_pos_at(node.range().start);
        let path = if path.is_empty() {
            format!("{}:{}", pos.row, pos.col)
        } else {
            id_path(path.iter().map(String::as_str))
        };
        self.issues
            .push(Issue::error(code, path, message).at(pos.row, pos.col));
    }

    fn read_root(&mut self, node: Node) -> Option<ProtocolDocument> {
        if node.tag_name().name() != ROOT_TYPE || node.tag_name().namespace().is_some() {
            self.issue(
                node,
                "BAD_ROOT",
                &[],
                format!(
                    "root element must be <{ROOT_TYPE}>, found <{}>",
                    node.tag_name().name()
                ),
            );
            return None;
        }
        self.check_attributes(
            node,
            &["id", "name", "schemaVersion", "source", "type"],
            &[],
        );
        if let Some(t) = node.attribute("type") {
            if t != ROOT_TYPE {
                self.issue(
                    node,
                    "BAD_ROOT",
                    &[],
                    format!("root type must be {ROOT_TYPE}, found {t}"),
                );
            }
        }
        let schema_version = self.required_attr(node, "schemaVersion", &[]);
        let source_name = node.attribute("source").map(str::to_string);
        let root = self.read_entity(node, true, &mut Vec::new())?;
        Some(ProtocolDocument {
            schema_version: schema_version?,
            root,
            source_name,
        })
    }

    fn required_attr(&mut self, node: Node, attr: &str, path: &[String]) -> Option<String> {
        match node.attribute(attr) {
            None => {
                self.issue(
                    node,
                    "MISSING_ATTRIBUTE",
                    path,
                    format!("<{}> requires attribute '{attr}'", node.tag_name().name()),
                );
                None
            }
            Some("") => {
                self.issue(
                    node,
                    "EMPTY_ATTRIBUTE",
                    path,
                    format!("attribute '{attr}' must not be empty"),
                );
                None
            }
            Some(v) => Some(v.to_string()),
        }
    }

    fn check_attributes(&mut self, node: Node, allowed: &[&str], path: &[String]) {
        for attr in node.attributes() {
            if attr.namespace().is_some() || !allowed.contains(&attr.name()) {
                self.issue(
                    node,
                    "UNKNOWN_ATTRIBUTE",
                    path,
                    format!(
                        "attribute '{}' is not allowed on <{}>",
                        attr.name(),
                        node.tag_name().name()
                    ),
                );
            }
        }
    }

    fn check_no_text(&mut self, node: Node, path: &[String]) {
        for child in node.children() {
            if child.is_text() && !child.text().unwrap_or("").trim().is_empty() {
                self.issue(
                    child,
                    "UNEXPECTED_TEXT",
                    path,
                    format!(
                        "text content is not allowed inside <{}>",
                        node.tag_name().name()
                    ),
                );
            }
        }
    }

    fn read_entity(&mut self, node: Node, is_root: bool, path: &mut Vec<String>) -> Option<Entity> {
        if !is_root {
            self.check_attributes(node, &["id", "name", "type"], path);
        }
        let id = self.required_attr(node, "id", path);
        let name = self.required_attr(node, "name", path);
        let entity_type = if is_root {
            Some(ROOT_TYPE.to_string())
        } else {
            self.required_attr(node, "type", path)
        };

        let id_known = id.is_some();
        if let Some(id) = &id {
            path.push(id.clone());
            if !self.ids.insert(id.clone()) {
                self.issue(
                    node,
                    "DUPLICATE_ID",
                    path,
                    format!("entity id '{id}' is used more than once"),
                );
            }
        }
        self.check_no_text(node, path);

        let mut essentials: Vec<Essential> = Vec::new();
        let mut children = Vec::new();
        let mut ok = true;
        for child in node.children().filter(|n| n.is_element()) {
            if child.tag_name().namespace().is_some() {
                self.issue(
                    child,
                    "UNKNOWN_ELEMENT",
                    path,
                    "namespaced elements are not allowed".into(),
                );
                ok = false;
                continue;
            }
            match child.tag_name().name() {
                "Essential" => match self.read_essential(child, path) {
                    Some(e) => {
                        if essentials.iter().any(|x| x.name == e.name) {
                            self.issue(
                                child,
                                "DUPLICATE_ESSENTIAL",
                                path,
                                format!("essential '{}' appears more than once", e.name),
                            );
                            ok = false;
                        } else {
                            essentials.push(e);
                        }
                    }
                    None => ok = false,
                },
                "Entity" => match self.read_entity(child, false, path) {
                    Some(e) => children.push(e),
                    None => ok = false,
                },
                other => {
                    self.issue(
                        child,
                        "UNKNOWN_ELEMENT",
                        path,
                        format!("element <{other}> is not allowed inside an entity"),
                    );
                    ok = false;
                }
            }
        }
        if id_known {
            path.pop();
        }
        if !ok {
            return None;
        }
        Some(Entity {
            id: id?,
            name: name?,
            entity_type: entity_type?,
            essentials,
            children,
        })
    }

    fn read_essential(&mut self, node: Node, path: &[String]) -> Option<Essential> {
        self.check_attributes(node, &[], path);
        self.check_no_text(node, path);
        let elements: Vec<_> = node.children().filter(|n| n.is_element()).collect();
        let shape_ok = elements.len() == 2
            && elements[0].tag_name().name() == "Name"
            && elements[1].tag_name().name() == "Value"
            && elements.iter().all(|e| e.tag_name().namespace().is_none());
        if !shape_ok {
            self.issue(
                node,
                "MALFORMED_ESSENTIAL",
                path,
                "<Essential> must contain exactly <Name> followed by <Value>".into(),
            );
            return None;
        }
        let (name_node, value_node) = (elements[0], elements[1]);
        self.check_attributes(name_node, &[], path);
        if name_node.children().any(|n| n.is_element()) {
            self.issue(
                name_node,
                "MALFORMED_ESSENTIAL",
                path,
                "<Name> must contain text only".into(),
            );
            return None;
        }
        let name = element_text(name_node);
        if name.is_empty() {
            self.issue(
                name_node,
                "MALFORMED_ESSENTIAL",
                path,
                "essential name must not be empty".into(),
            );
            return None;
        }

        self.check_attributes(value_node, &["type"], path);
        let Some(tag) = value_node.attribute("type") else {
            self.issue(
                value_node,
                "MISSING_ATTRIBUTE",
                path,
                format!("<Value> of essential '{name}' requires attribute 'type'"),
            );
            return None;
        };
        let Some(value_type) = ValueType::from_tag(tag) else {
            self.issue(
                value_node,
                "UNKNOWN_VALUE_TYPE",
                path,
                format!("value type '{tag}' of essential '{name}' is not one of Decimal, Integer, Boolean, String, EnumToken, Composite"),
            );
            return None;
        };
        let payload = if value_type == ValueType::Composite {
            self.check_no_text(value_node, path);
            Payload::Composite(self.read_composite(value_node, path)?)
        } else {
            if value_node.children().any(|n| n.is_element()) {
                self.issue(
                    value_node,
                    "BAD_VALUE",
                    path,
                    format!("{value_type} value of essential '{name}' must be text"),
                );
                return None;
            }
            Payload::Scalar(element_text(value_node))
        };
        match TypedValue::new(value_type, payload) {
            Ok(value) => Some(Essential { name, value }),
            Err(e) => {
                self.issue(
                    value_node,
                    "BAD_VALUE",
                    path,
                    format!("essential '{name}': {e}"),
                );
                None
            }
        }
    }

    fn read_composite(&mut self, node: Node, path: &[String]) -> Option<Vec<CompositeNode>> {
        let mut out = Vec::new();
        for child in node.children().filter(|n| n.is_element()) {
            let name = child.tag_name().name();
            if child.tag_name().namespace().is_some() || !is_element_name(name) {
                self.issue(
                    child,
                    "BAD_VALUE",
                    path,
                    format!("composite element <{name}> is not allowed"),
                );
                return None;
            }
            self.check_attributes(child, &[], path);
            let has_elements = child.children().any(|n| n.is_element());
            let content = if has_elements {
                self.check_no_text(child, path);
                NodeContent::Children(self.read_composite(child, path)?)
            } else {
                NodeContent::Text(element_text(child))
            };
            out.push(CompositeNode {
                name: name.to_string(),
                content,
            });
        }
        Some(out)
    }
}

fn element_text(node: Node) -> String {
    node.children()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect::<String>()
        .trim()
        .to_string()
}

/// Canonical serialization of a whole document.
pub fn serialize_protocol(doc: &ProtocolDocument) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let mut attrs = vec![
        ("id", doc.root.id.as_str()),
        ("name", doc.root.name.as_str()),
        ("schemaVersion", doc.schema_version.as_str()),
    ];
    if let Some(source) = &doc.source_name {
        attrs.push(("source", source));
    }
    write_entity(&mut out, ROOT_TYPE, &attrs, &doc.root, 0, true);
    out
}

/// Canonical serialization of one entity subtree (no XML declaration),
/// indented as if it were at depth 0. With `recursive = false` the child
/// entities are left out.
pub fn serialize_entity(entity: &Entity, recursive: bool) -> String {
    let mut out = String::new();
    let attrs = [
        ("id", entity.id.as_str()),
        ("name", entity.name.as_str()),
        ("type", entity.entity_type.as_str()),
    ];
    write_entity(&mut out, "Entity", &attrs, entity, 0, recursive);
    out
}

fn write_entity(
    out: &mut String,
    tag: &str,
    attrs: &[(&str, &str)],
    entity: &Entity,
    depth: usize,
    recursive: bool,
) {
    indent(out, depth);
    out.push('<');
    out.push_str(tag);
    for (k, v) in attrs {
        let _ = write!(out, " {k}=\"{}\"", Escaped::attr(v));
    }
    let children: &[Entity] = if recursive { &entity.children } else { &[] };
    if entity.essentials.is_empty() && children.is_empty() {
        out.push_str("/>\n");
        return;
    }
    out.push_str(">\n");
    for e in &entity.essentials {
        write_essential(out, e, depth + 1);
    }
    for child in children {
        let attrs = [
            ("id", child.id.as_str()),
            ("name", child.name.as_str()),
            ("type", child.entity_type.as_str()),
        ];
        write_entity(out, "Entity", &attrs, child, depth + 1, true);
    }
    indent(out, depth);
    let _ = writeln!(out, "</{tag}>");
}

fn write_essential(out: &mut String, e: &Essential, depth: usize) {
    indent(out, depth);
    out.push_str("<Essential>\n");
    indent(out, depth + 1);
    let _ = writeln!(out, "<Name>{}</Name>", Escaped::text(&e.name));
    indent(out, depth + 1);
    let tag = e.value.value_type().as_str();
    match e.value.payload() {
        Payload::Scalar(s) if s.is_empty() => {
            let _ = writeln!(out, "<Value type=\"{tag}\"/>");
        }
        Payload::Scalar(s) => {
            let _ = writeln!(out, "<Value type=\"{tag}\">{}</Value>", Escaped::text(s));
        }
        Payload::Composite(nodes) => {
            let _ = writeln!(out, "<Value type=\"{tag}\">");
            write_nodes(out, nodes, depth + 2);
            indent(out, depth + 1);
            out.push_str("</Value>\n");
        }
    }
    indent(out, depth);
    out.push_str("</Essential>\n");
}

fn write_nodes(out: &mut String, nodes: &[CompositeNode], depth: usize) {
    for n in nodes {
        indent(out, depth);
        match &n.content {
            NodeContent::Text(t) if t.is_empty() => {
                let _ = writeln!(out, "<{}/>", n.name);
            }
            NodeContent::Text(t) => {
                let _ = writeln!(out, "<{0}>{1}</{0}>", n.name, Escaped::text(t));
            }
            NodeContent::Children(c) => {
                let _ = writeln!(out, "<{}>", n.name);
                write_nodes(out, c, depth + 1);
                indent(out, depth);
                let _ = writeln!(out, "</{}>", n.name);
            }
        }
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

struct Escaped<'a> {
    text: &'a str,
    attr: bool,
}

impl<'a> Escaped<'a> {
    fn text(text: &'a str) -> Self {
        Self { text, attr: false }
    }

    fn attr(text: &'a str) -> Self {
        Self { text, attr: true }
    }
}

impl fmt::Display for Escaped<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.text.chars() {
            match c {
                '&' => f.write_str("&amp;")?,
                '<' => f.write_str("&lt;")?,
                '>' => f.write_str("&gt;")?,
                '"' if self.attr => f.write_str("&quot;")?,
                // Attribute-value normalization would turn these into spaces.
                '\t' if self.attr => f.write_str("&#9;")?,
                '\n' if self.attr => f.write_str("&#10;")?,
                '\r' => f.write_str("&#13;")?,
                c => f.write_char(c)?,
            }
        }
        Ok(())
    }
}
