//! Terminal review loop: plan, show, approve or reject, write.

use crate::{config, print_json, CliError, GlobalArgs, Status};
use clap::{ArgGroup, Args};
use protoagent_agent::{approve, AgentError, Proposal, ProposalStatus, RequestInput};
use protoagent_core::{parse_protocol, serialize_protocol};
use serde_json::json;
use std::io::{BufRead, Write};
use std::path::PathBuf;

#[derive(Args)]
#[command(group(ArgGroup::new("request_source").required(true).args(["request", "request_json"])))]
#[command(group(ArgGroup::new("mode").required(true).args(["yes", "interactive"])))]
pub struct ApplyArgs {
    /// Protocol XML file.
    pub protocol: PathBuf,
    /// Natural-language request.
    #[arg(long)]
    pub request: Option<String>,
    /// File holding a structured JSON request (object or array).
    #[arg(long)]
    pub request_json: Option<PathBuf>,
    /// Where to write the edited protocol. Written only when every proposal
    /// was applied.
    #[arg(long)]
    pub out: PathBuf,
    /// Approve every proposal without asking.
    #[arg(long)]
    pub yes: bool,
    /// Ask y/n for each proposal on the terminal.
    #[arg(long)]
    pub interactive: bool,
    /// Script for the mock backend; overrides the config's.
    #[arg(long)]
    pub script: Option<PathBuf>,
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn agent_error(e: AgentError) -> CliError {
    match e {
        e if e.is_backend() => CliError::Backend(e.to_string()),
        e @ AgentError::MalformedRouterOutput(_) => CliError::Backend(e.to_string()),
        e => CliError::Input(format!("{} ({})", e, e.code())),
    }
}

fn show(p: &Proposal) {
    println!(
        "Proposal {} [{}]{}",
        p.id,
        p.subrequest.category,
        if p.low_confidence {
            " (low confidence)"
        } else {
            ""
        }
    );
    println!("  request: {}", p.subrequest.text);
    for line in p.plan_text.lines() {
        println!("  {line}");
    }
    for a in &p.actions {
        println!("  - {}", serde_json::to_string(a).expect("action encodes"));
    }
    if let Some(e) = &p.error {
        println!("  error: {} {}", e.code, e.message);
    }
}

fn ask(id: &str, input: &mut impl BufRead) -> bool {
    loop {
        print!("Approve {id}? [y/n] ");
        let _ = std::io::stdout().flush();
        let mut line = String::new();
        match input.read_line(&mut line) {
            Ok(0) | Err(_) => return false,
            Ok(_) => match line.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" => return true,
                "n" | "no" => return false,
                _ => println!("Please answer y or n."),
            },
        }
    }
}

pub fn run(g: &GlobalArgs, args: ApplyArgs) -> Result<Status, CliError> {
    let xml = read(&args.protocol)?;
    let mut doc = parse_protocol(&xml).map_err(|e| {
        CliError::Input(format!(
            "{} is not a valid protocol: {e}",
            args.protocol.display()
        ))
    })?;
    let input = match (&args.request, &args.request_json) {
        (Some(text), None) => RequestInput::Text(text.clone()),
        (None, Some(path)) => RequestInput::Structured(read(path)?),
        _ => unreachable!("clap enforces exactly one request flag"),
    };
    let llm = config::llm_config(g, args.script.as_deref())?;
    let agent = config::agent(g, &llm)?;
    let dispatch = agent.submit(&doc, &input, 1).map_err(agent_error)?;

    let human = !g.json;
    let stdin = std::io::stdin();
    let mut stdin = stdin.lock();
    let mut proposals = dispatch.proposals;
    // Proposals run in order, each against the result of the previous one,
    // as approvals do in the service.
    for p in &mut proposals {
        if human {
            show(p);
        }
        if p.status != ProposalStatus::Pending {
            continue;
        }
        let yes = args.yes || ask(&p.id, &mut stdin);
        if !yes {
            p.transition(ProposalStatus::Rejected)
                .expect("pending can be rejected");
        } else if let Ok(next) = approve(p, &doc, &agent.toolset) {
            doc = next;
        }
        if human {
            println!("  -> {}", p.status);
        }
    }
    if human {
        for sub in &dispatch.not_dispatchable {
            println!("Not a protocol edit, nothing done: {}", sub.text);
        }
    }

    let all_applied = proposals
        .iter()
        .all(|p| p.status == ProposalStatus::Applied);
    if all_applied {
        std::fs::write(&args.out, serialize_protocol(&doc))
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", args.out.display())))?;
    }
    if g.json {
        print_json(&json!({
            "proposals": proposals,
            "not_dispatchable": dispatch.not_dispatchable,
            "written": all_applied.then(|| args.out.display().to_string()),
        }));
    } else if all_applied {
        println!("Wrote {}", args.out.display());
    } else {
        println!(
            "Not all proposals were applied; {} left unwritten.",
            args.out.display()
        );
    }
    Ok(if all_applied {
        Status::Ok
    } else {
        Status::NotOk
    })
}
