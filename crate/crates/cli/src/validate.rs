use crate::{config, print_json, CliError, GlobalArgs, Status};
use clap::Args;
use protoagent_core::protocol::{render_simplified_tree, validate_structure, validate_syntax};
use protoagent_core::{parse_protocol, RuleSet};
use serde_json::json;
use std::path::PathBuf;

#[derive(Args)]
pub struct ValidateArgs {
    /// Protocol XML file.
    pub protocol: PathBuf,
    /// Rule set (JSON) used instead of the builtin one.
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

#[derive(Args)]
pub struct TreeArgs {
    /// Protocol XML file.
    pub protocol: PathBuf,
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn run(g: &GlobalArgs, args: ValidateArgs) -> Result<Status, CliError> {
    let xml = read(&args.protocol)?;
    let rules = match &args.rules {
        Some(path) => RuleSet::from_json(&read(path)?)
            .map_err(|e| CliError::Input(format!("invalid rules {}: {e}", path.display())))?,
        None => RuleSet::builtin(),
    };
    let mut report = validate_syntax(&xml, &config::syntax_options(g));
    // Structural rules only make sense on a document that parses.
    if let Ok(doc) = parse_protocol(&xml) {
        report = report.merge(validate_structure(&doc, &rules));
    }
    if g.json {
        print_json(&json!(report));
    } else {
        println!("{report}");
    }
    Ok(if report.ok { Status::Ok } else { Status::NotOk })
}

pub fn tree(g: &GlobalArgs, args: TreeArgs) -> Result<Status, CliError> {
    let xml = read(&args.protocol)?;
    let doc = parse_protocol(&xml).map_err(|e| {
        CliError::Input(format!(
            "{} is not a valid protocol: {e}",
            args.protocol.display()
        ))
    })?;
    let tree = render_simplified_tree(&doc).to_string();
    if g.json {
        print_json(&json!({ "tree": tree, "protocol_hash": doc.content_hash() }));
    } else {
        print!("{tree}");
        if !tree.ends_with('\n') {
            println!();
        }
    }
    Ok(Status::Ok)
}
