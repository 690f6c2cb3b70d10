//! The published schema files stay in step with the code.

use protoagent_core::ValueType;

const XSD: &str = include_str!("../schemas/protocol.xsd");
const ACTIONS: &str = include_str!("../schemas/action.schema.json");

#[test]
fn xsd_lists_every_value_type() {
    let doc = roxmltree::Document::parse(XSD).unwrap();
    let enums: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name(("http://www.w3.org/2001/XMLSchema", "enumeration")))
        .filter_map(|n| n.attribute("value"))
        .collect();
    let tags: Vec<&str> = ValueType::ALL.iter().map(|t| t.as_str()).collect();
    assert_eq!(enums, tags);
}

#[test]
fn xsd_root_and_attributes_match_reader() {
    let doc = roxmltree::Document::parse(XSD).unwrap();
    let root = doc
        .descendants()
        .find(|n| n.attribute("name") == Some("ScanProtocol"))
        .unwrap();
    let attrs: Vec<&str> = root
        .descendants()
        .filter(|n| n.tag_name().name() == "attribute")
        .filter_map(|n| n.attribute("name"))
        .collect();
    assert_eq!(attrs, ["id", "name", "schemaVersion", "source", "type"]);
}

#[test]
fn action_schema_is_json() {
    let v: serde_json::Value = serde_json::from_str(ACTIONS).unwrap();
    assert!(v["oneOf"].as_array().unwrap().len() == 3);
}
