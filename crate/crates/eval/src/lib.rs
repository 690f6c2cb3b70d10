//! Benchmark scoring for the protocol agent.
//!
//! Four metric families are computed per case and aggregated per bucket
//! (the three edit categories plus structured JSON requests): syntax
//! correctness, plan accuracy over affected XML segments, plan faithfulness
//! from reconstructed pseudo tasks, and entity/essential retrieval scores.

pub mod benchmark;
pub mod metrics;
pub mod pseudo;
pub mod report;
pub mod segments;

pub use benchmark::{run_benchmark, BenchmarkBackend, BenchmarkConfig, CaseResult};
pub use metrics::{
    compute_plan_accuracy, compute_retrieval_metrics, compute_scr, cosine_similarity, mean_sem,
    Bucket, MeanSem, Outcome, Prf, Rate, RateTable, RetrievalScores,
};
pub use pseudo::{
    compute_faithfulness, generate_pseudo_tasks, pseudo_task_prompt, Faithfulness, PseudoTask,
};
pub use report::{MetricsReport, RetrievalSummary};
pub use segments::{affected_segments, Segments};

use protoagent_agent::AgentError;
use protoagent_llm::LlmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("vector lengths differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,
    #[error("gold set is empty")]
    EmptyGold,
    #[error("no cases found in {0}")]
    EmptyCaseSet(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("model output unusable after retry: {0}")]
    MalformedOutput(String),
    #[error("case {case}: {message}")]
    Case { case: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            EvalError::ZeroVector => "ZERO_VECTOR",
            EvalError::EmptyGold => "EMPTY_GOLD",
            EvalError::EmptyCaseSet(_) => "EMPTY_CASE_SET",
            EvalError::Precondition(_) => "PRECONDITION",
            EvalError::MalformedOutput(_) => "MALFORMED_OUTPUT",
            EvalError::Case { .. } => "CASE_ERROR",
            EvalError::Io { .. } => "IO",
            EvalError::Llm(e) => e.code(),
            EvalError::Agent(e) => e.code(),
        }
    }
}
