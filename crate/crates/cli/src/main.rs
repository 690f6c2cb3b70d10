//! `protoagent`: run the editing service, check and inspect protocols, apply
//! one request from the terminal and run the evaluation benchmark.
//!
//! Exit codes (stable):
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | validation issues, or a proposal ended Failed or Rejected |
//! | 2 | bad input: usage, unreadable files, invalid config or case directory |
//! | 3 | the service could not bind its port |
//! | 4 | the model backend failed |

mod apply;
mod config;
mod eval;
mod serve;
mod validate;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

#[derive(Parser)]
#[command(
    name = "protoagent",
    version,
    about = "Review-gated editing of CT scan protocols"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct GlobalArgs {
    /// LLM configuration file (JSON).
    #[arg(long, global = true, env = "PROTOAGENT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the backend named in the config.
    #[arg(long, global = true, value_enum)]
    pub llm: Option<LlmKind>,
    /// Require registered entity types and declared value types.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LlmKind {
    Mock,
    Http,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the REST interface.
    Serve(serve::ServeArgs),
    /// Check a protocol file for syntax and structural issues.
    Validate(validate::ValidateArgs),
    /// Print the simplified tree of a protocol.
    Tree(validate::TreeArgs),
    /// Plan one request against a protocol and apply the approved proposals.
    Apply(apply::ApplyArgs),
    /// Run the benchmark over a directory of cases.
    Eval(eval::EvalArgs),
    /// Write each case's gold segments by replaying its gold actions.
    GoldSegments(eval::GoldSegmentsArgs),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("model backend failed: {0}")]
    Backend(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Bind { .. } => 3,
            CliError::Backend(_) => 4,
        }
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Issues found, or proposals not applied.
    NotOk,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve(_)) {
        "info"
    } else {
        "warn"
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .init();

    let g = &cli.global;
    let result = match cli.command {
        Command::Serve(a) => serve::run(g, a),
        Command::Validate(a) => validate::run(g, a),
        Command::Tree(a) => validate::tree(g, a),
        Command::Apply(a) => apply::run(g, a),
        Command::Eval(a) => eval::run(g, a),
        Command::GoldSegments(a) => eval::gold_segments(g, a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotOk) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json encodes")
    );
}
