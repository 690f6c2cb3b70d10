//! The protocol agent: routing a request into categorized sub-requests,
//! building the prompt memory, planning each sub-request with tool calls
//! and executing approved proposals.
//!
//! Natural-language requests go through [`route`] and [`plan`]; structured
//! JSON requests are parsed and planned deterministically without any model
//! call. [`Agent`] ties both paths together.

mod json;
pub mod memory;
pub mod pipeline;
pub mod planner;
pub mod proposal;
pub mod request;
pub mod router;
pub mod structured;

pub use memory::{build_memory, DescriptionCatalog, MemoryContext};
pub use pipeline::{Agent, Dispatch, RequestInput};
pub use planner::{plan, planner_tools, PlanOutcome, MAX_PLANNER_ROUNDS, UNRESOLVED_REFERENCE};
pub use proposal::{
    approve, execute, EssentialRef, Proposal, ProposalError, ProposalStatus, RetrievedContext,
};
pub use request::{Origin, RequestCategory, SubRequest};
pub use router::route;
pub use structured::{
    parse_structured_request, parse_structured_requests, plan_structured, StructuredRequest,
};

use protoagent_core::EditError;
use protoagent_llm::LlmError;
use thiserror::Error;

pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("request text is empty")]
    EmptyRequest,
    #[error("router output unusable after retry: {0}")]
    MalformedRouterOutput(String),
    #[error("planner output unusable after retry: {0}")]
    MalformedPlan(String),
    #[error("structured request invalid at '{pointer}': {message}")]
    JsonSchema { pointer: String, message: String },
    #[error("sub-request of category Others is not dispatchable")]
    NotDispatchable,
    #[error("proposal status {from} cannot become {to}")]
    InvalidStatus {
        from: ProposalStatus,
        to: ProposalStatus,
    },
    #[error(transparent)]
    Edit(#[from] EditError),
}

impl AgentError {
    pub fn code(&self) -> &'static str {
        match self {
            AgentError::Llm(e) => e.code(),
            AgentError::EmptyRequest => "EMPTY_REQUEST",
            AgentError::MalformedRouterOutput(_) => "MALFORMED_ROUTER_OUTPUT",
            AgentError::MalformedPlan(_) => "MALFORMED_PLAN",
            AgentError::JsonSchema { .. } => "JSON_SCHEMA",
            AgentError::NotDispatchable => "NOT_DISPATCHABLE",
            AgentError::InvalidStatus { .. } => "INVALID_STATUS",
            AgentError::Edit(e) => e.code(),
        }
    }

    /// Failures of the model backend itself, as opposed to bad input or
    /// unusable model output.
    pub fn is_backend(&self) -> bool {
        matches!(self, AgentError::Llm(_))
    }
}
