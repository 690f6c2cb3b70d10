//! Batch evaluation over a case directory:
//! `cases/<id>/{protocol.xml, request.txt | request.json, gold_actions.json,
//! gold_segments/<entity id>.xml, gold_retrieval.json, script.json}`.

use crate::metrics::{
    compute_plan_accuracy, compute_retrieval_metrics, compute_scr, GoldRetrieval, Outcome,
};
use crate::pseudo::{
    compute_faithfulness, generate_pseudo_tasks, Faithfulness, DEFAULT_PSEUDO_TASKS,
};
use crate::report::MetricsReport;
use crate::segments::{affected_segments, Segments};
use crate::{Bucket, EvalError, RetrievalScores};
use protoagent_agent::{
    approve, Agent, DescriptionCatalog, EssentialRef, ProposalStatus, RequestCategory,
    RequestInput, RetrievedContext,
};
use protoagent_core::{
    parse_protocol, serialize_protocol, validate_syntax, Action, ProtocolDocument, Toolset,
};
use protoagent_llm::{
    ChatBackend, ChatParams, Embedder, Gateway, HashingEmbedder, ScriptedBackend,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Clone)]
pub enum BenchmarkBackend {
    /// Replays each case's own `script.json`.
    Scripted,
    /// One backend for every case.
    Shared(Arc<dyn ChatBackend>),
}

#[derive(Clone)]
pub struct BenchmarkConfig {
    pub backend: BenchmarkBackend,
    pub embedder: Arc<dyn Embedder>,
    pub n_pseudo: usize,
    pub params: ChatParams,
    pub max_input_tokens: Option<usize>,
    pub toolset: Toolset,
}

impl BenchmarkConfig {
    /// Fully offline: per-case scripts and the hashing embedder.
    pub fn scripted() -> Self {
        Self {
            backend: BenchmarkBackend::Scripted,
            embedder: Arc::new(HashingEmbedder::default()),
            n_pseudo: DEFAULT_PSEUDO_TASKS,
            params: ChatParams::default(),
            max_input_tokens: None,
            toolset: Toolset::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseStatus {
    Scored,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalSummary {
    pub id: String,
    pub category: RequestCategory,
    pub status: ProposalStatus,
    pub actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    /// Unknown when the case is too broken to tell its category.
    pub bucket: Option<Bucket>,
    pub status: CaseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub syntax_ok: bool,
    pub plan_correct: bool,
    pub proposals: Vec<ProposalSummary>,
    /// Roots of the affected subtrees the agent produced.
    pub affected: Vec<String>,
    pub retrieval: Option<RetrievalScores>,
    pub faithfulness: Option<Faithfulness>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CaseResult {
    fn failed(id: &str, bucket: Option<Bucket>, error: String) -> Self {
        Self {
            id: id.to_string(),
            bucket,
            status: CaseStatus::Failed,
            error: Some(error),
            syntax_ok: false,
            plan_correct: false,
            proposals: Vec::new(),
            affected: Vec::new(),
            retrieval: None,
            faithfulness: None,
            notes: Vec::new(),
        }
    }
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", file_label(path)))
}

/// Path relative to the case directory, so reports do not depend on where
/// the suite lives.
fn file_label(path: &Path) -> String {
    let mut parts: Vec<String> = path
        .iter()
        .rev()
        .take(2)
        .map(|p| p.to_string_lossy().into_owned())
        .collect();
    parts.reverse();
    parts.join("/")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    serde_json::from_str(&read(path)?).map_err(|e| format!("invalid {}: {e}", file_label(path)))
}

#[derive(Deserialize)]
struct GoldRetrievalFile {
    #[serde(default)]
    entities: Vec<String>,
    #[serde(default)]
    essentials: Vec<EssentialRef>,
}

pub fn load_gold_retrieval(path: &Path) -> Result<GoldRetrieval, String> {
    let file: GoldRetrievalFile = read_json(path)?;
    Ok(GoldRetrieval {
        entities: file.entities.into_iter().collect(),
        essentials: file
            .essentials
            .into_iter()
            .map(|e| (e.entity_id, e.essential_name))
            .collect(),
    })
}

pub fn load_gold_segments(dir: &Path) -> Result<Segments, String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("cannot read {}: {e}", file_label(dir)))?;
    let mut out = Segments::new();
    for entry in entries {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("xml") {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        out.insert(id, read(&path)?);
    }
    Ok(out)
}

/// Writes one file per affected subtree, replacing the directory contents.
pub fn write_segments(dir: &Path, segments: &Segments) -> std::io::Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    for (id, xml) in segments {
        fs::write(dir.join(format!("{id}.xml")), xml)?;
    }
    Ok(())
}

/// The segments gold actions produce on a protocol.
pub fn replay_gold(
    doc: &ProtocolDocument,
    actions: &[Action],
    toolset: &Toolset,
) -> Result<Segments, EvalError> {
    let after = toolset
        .apply_actions(doc, actions)
        .map_err(|e| EvalError::Precondition(format!("gold actions do not apply: {e}")))?;
    Ok(affected_segments(doc, &after.document))
}

fn bucket_of(dir: &Path) -> Option<Bucket> {
    if dir.join("request.json").exists() {
        return Some(Bucket::Json);
    }
    let actions: Vec<Action> = read_json(&dir.join("gold_actions.json")).ok()?;
    let kind = actions.first()?.kind();
    RequestCategory::ALL
        .into_iter()
        .find(|c| c.action_kind() == Some(kind))
        .and_then(Bucket::from_category)
}

struct CaseRun {
    result: CaseResult,
    gold: Option<Segments>,
    produced: Option<Segments>,
}

fn run_case(dir: &Path, config: &BenchmarkConfig) -> CaseRun {
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bucket = bucket_of(dir);
    match score_case(&id, bucket, dir, config) {
        Ok(run) => run,
        Err(message) => {
            tracing::warn!(case = %id, %message, "case failed");
            let gold = load_gold_segments(&dir.join("gold_segments")).ok();
            CaseRun {
                result: CaseResult::failed(&id, bucket, message),
                gold,
                produced: None,
            }
        }
    }
}

fn score_case(
    id: &str,
    bucket: Option<Bucket>,
    dir: &Path,
    config: &BenchmarkConfig,
) -> Result<CaseRun, String> {
    let bucket =
        bucket.ok_or("cannot determine the case category (missing request or gold actions)")?;
    let doc = parse_protocol(&read(&dir.join("protocol.xml"))?)
        .map_err(|e| format!("protocol.xml: {e}"))?;
    let input = if dir.join("request.json").exists() {
        RequestInput::Structured(read(&dir.join("request.json"))?)
    } else {
        RequestInput::Text(read(&dir.join("request.txt"))?.trim().to_string())
    };
    let gold_segments = load_gold_segments(&dir.join("gold_segments"))?;
    let gold_retrieval = load_gold_retrieval(&dir.join("gold_retrieval.json"))?;
    let backend: Arc<dyn ChatBackend> = match &config.backend {
        BenchmarkBackend::Scripted => Arc::new(
            ScriptedBackend::from_file(&dir.join("script.json")).map_err(|e| e.to_string())?,
        ),
        BenchmarkBackend::Shared(b) => b.clone(),
    };
    let gateway = Gateway::new(backend).with_max_input_tokens(config.max_input_tokens);
    let agent = Agent {
        gateway,
        toolset: config.toolset.clone(),
        catalog: DescriptionCatalog::builtin(),
        params: config.params.clone(),
    };

    let dispatch = agent
        .submit(&doc, &input, 1)
        .map_err(|e| format!("{}: {e}", e.code()))?;
    let mut current = doc.clone();
    let mut proposals = dispatch.proposals;
    for p in &mut proposals {
        if p.status != ProposalStatus::Pending {
            continue;
        }
        if let Ok(next) = approve(p, &current, &agent.toolset) {
            current = next;
        }
    }
    let all_applied = !proposals.is_empty()
        && proposals
            .iter()
            .all(|p| p.status == ProposalStatus::Applied);
    let syntax_ok = all_applied
        && validate_syntax(
            &serialize_protocol(&current),
            &agent.toolset.syntax_options(),
        )
        .ok;
    let produced = affected_segments(&doc, &current);

    let mut retrieved = RetrievedContext::default();
    for p in &proposals {
        retrieved.merge(&p.retrieved);
    }
    let retrieval = compute_retrieval_metrics(&gold_retrieval, &retrieved);

    let mut notes = Vec::new();
    if !dispatch.not_dispatchable.is_empty() {
        notes.push(format!(
            "{} sub-request(s) labeled Others",
            dispatch.not_dispatchable.len()
        ));
    }
    let request_text = match &input {
        RequestInput::Text(t) => t.clone(),
        RequestInput::Structured(_) => dispatch
            .subrequests
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join("; "),
    };
    let faithfulness = if retrieved.is_empty() {
        notes.push("faithfulness skipped: nothing was retrieved".into());
        None
    } else {
        generate_pseudo_tasks(
            id,
            &retrieved,
            &doc,
            &agent.catalog,
            &agent.gateway,
            &agent.params,
            config.n_pseudo,
        )
        .and_then(|tasks| compute_faithfulness(&request_text, &tasks, config.embedder.as_ref()))
        .map_err(|e| notes.push(format!("faithfulness failed: {e}")))
        .ok()
    };

    Ok(CaseRun {
        result: CaseResult {
            id: id.to_string(),
            bucket: Some(bucket),
            status: CaseStatus::Scored,
            error: None,
            syntax_ok,
            plan_correct: produced == gold_segments,
            proposals: proposals
                .iter()
                .map(|p| ProposalSummary {
                    id: p.id.clone(),
                    category: p.subrequest.category,
                    status: p.status,
                    actions: p.actions.len(),
                    error_code: p.error.as_ref().map(|e| e.code.clone()),
                })
                .collect(),
            affected: produced.keys().cloned().collect(),
            retrieval: Some(retrieval),
            faithfulness,
            notes,
        },
        gold: Some(gold_segments),
        produced: Some(produced),
    })
}

/// Case directories directly under `case_dir`, sorted by name.
pub fn case_dirs(case_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let entries = fs::read_dir(case_dir).map_err(|source| EvalError::Io {
        path: case_dir.display().to_string(),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(EvalError::EmptyCaseSet(case_dir.display().to_string()));
    }
    Ok(dirs)
}

/// Scores every case. Per-case problems are recorded in the report; only a
/// missing or empty case directory is an error.
pub fn run_benchmark(
    case_dir: &Path,
    config: &BenchmarkConfig,
) -> Result<MetricsReport, EvalError> {
    let runs: Vec<CaseRun> = case_dirs(case_dir)?
        .iter()
        .map(|d| run_case(d, config))
        .collect();

    let scored: Vec<&CaseRun> = runs.iter().filter(|r| r.result.bucket.is_some()).collect();
    let scr = compute_scr(
        &scored
            .iter()
            .map(|r| Outcome {
                bucket: r.result.bucket.expect("filtered"),
                ok: r.result.syntax_ok,
            })
            .collect::<Vec<_>>(),
    );
    // A case without gold segments can never match; the empty marker keeps
    // it in the denominator.
    let gold: Vec<(String, Bucket, Option<Segments>)> = scored
        .iter()
        .map(|r| {
            (
                r.result.id.clone(),
                r.result.bucket.expect("filtered"),
                r.gold.clone(),
            )
        })
        .collect();
    let produced: BTreeMap<String, Option<Segments>> = scored
        .iter()
        .filter(|r| r.gold.is_some())
        .filter_map(|r| r.produced.clone().map(|p| (r.result.id.clone(), Some(p))))
        .collect();
    let plan_accuracy = compute_plan_accuracy(&gold, &produced);

    Ok(MetricsReport::aggregate(
        runs.into_iter().map(|r| r.result).collect(),
        scr,
        plan_accuracy,
        config,
    ))
}
