use crate::{config, print_json, CliError, GlobalArgs, Status};
use clap::Args;
use protoagent_core::{parse_protocol, Action};
use protoagent_eval::benchmark::{case_dirs, load_gold_segments, replay_gold, write_segments};
use protoagent_eval::{run_benchmark, BenchmarkBackend, BenchmarkConfig, EvalError};
use protoagent_llm::BackendKind;
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct EvalArgs {
    /// Directory with one sub-directory per case.
    #[arg(long)]
    pub cases: PathBuf,
    /// Where report.json and report.md go.
    #[arg(long)]
    pub out: PathBuf,
    /// Pseudo tasks generated per case.
    #[arg(long, default_value_t = protoagent_eval::pseudo::DEFAULT_PSEUDO_TASKS)]
    pub n_pseudo: usize,
}

#[derive(Args)]
pub struct GoldSegmentsArgs {
    #[arg(long)]
    pub cases: PathBuf,
    /// Compare with the stored segments instead of writing them.
    #[arg(long)]
    pub check: bool,
}

fn eval_error(e: EvalError) -> CliError {
    CliError::Input(e.to_string())
}

pub fn run(g: &GlobalArgs, args: EvalArgs) -> Result<Status, CliError> {
    let llm = config::llm_config(g, None)?;
    let mut bench = BenchmarkConfig::scripted();
    bench.n_pseudo = args.n_pseudo;
    bench.toolset = config::toolset(g);
    if llm.backend == BackendKind::Http {
        bench.backend = BenchmarkBackend::Shared(
            llm.chat_backend()
                .map_err(|e| CliError::Input(e.to_string()))?,
        );
        bench.embedder = llm.embedder().map_err(|e| CliError::Input(e.to_string()))?;
        bench.params = llm.params();
        bench.max_input_tokens = llm.max_input_tokens;
    }
    let report = run_benchmark(&args.cases, &bench).map_err(eval_error)?;
    report.write_to(&args.out).map_err(|e| {
        CliError::Input(format!(
            "cannot write report to {}: {e}",
            args.out.display()
        ))
    })?;
    if g.json {
        print_json(&json!({
            "out": args.out.display().to_string(),
            "cases_total": report.cases_total,
            "cases_failed": report.cases_failed,
            "scr_micro": report.scr.micro_rate,
            "plan_accuracy_micro": report.plan_accuracy.micro_rate,
        }));
    } else {
        print!("{}", report.to_markdown());
        println!("\nWrote {}", args.out.join("report.json").display());
    }
    Ok(Status::Ok)
}

fn replay_case(dir: &Path, g: &GlobalArgs) -> Result<protoagent_eval::Segments, String> {
    let read =
        |name: &str| std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    let doc = parse_protocol(&read("protocol.xml")?).map_err(|e| format!("protocol.xml: {e}"))?;
    let actions: Vec<Action> = serde_json::from_str(&read("gold_actions.json")?)
        .map_err(|e| format!("gold_actions.json: {e}"))?;
    replay_gold(&doc, &actions, &config::toolset(g)).map_err(|e| e.to_string())
}

pub fn gold_segments(g: &GlobalArgs, args: GoldSegmentsArgs) -> Result<Status, CliError> {
    let mut status = Status::Ok;
    for dir in case_dirs(&args.cases).map_err(eval_error)? {
        let name = dir
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .to_string();
        let segments = replay_case(&dir, g).map_err(|e| CliError::Input(format!("{name}: {e}")))?;
        let target = dir.join("gold_segments");
        if args.check {
            let stored = load_gold_segments(&target).unwrap_or_default();
            let same = stored == segments;
            println!("{name}: {}", if same { "matches" } else { "differs" });
            if !same {
                status = Status::NotOk;
            }
        } else {
            write_segments(&target, &segments)
                .map_err(|e| CliError::Input(format!("cannot write {}: {e}", target.display())))?;
            println!("{name}: {} segment(s)", segments.len());
        }
    }
    Ok(status)
}
