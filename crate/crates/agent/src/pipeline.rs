use crate::planner::plan;
use crate::structured::{parse_structured_request, plan_structured};
use crate::{
    build_memory, route, AgentError, DescriptionCatalog, Proposal, ProposalError, ProposalStatus,
    RetrievedContext, SubRequest,
};
use protoagent_core::{ProtocolDocument, Toolset};
use protoagent_llm::{ChatParams, Gateway};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum RequestInput {
    /// Free text for the router.
    Text(String),
    /// Raw JSON: one structured request object or an array of them.
    Structured(String),
}

/// The result of submitting one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub subrequests: Vec<SubRequest>,
    /// One per dispatchable sub-request, in emission order.
    pub proposals: Vec<Proposal>,
    /// Sub-requests labeled Others; shown to the user, never executed.
    pub not_dispatchable: Vec<SubRequest>,
}

pub struct Agent {
    pub gateway: Gateway,
    pub toolset: Toolset,
    pub catalog: DescriptionCatalog,
    pub params: ChatParams,
}

impl Agent {
    pub fn new(gateway: Gateway) -> Self {
        Self {
            gateway,
            toolset: Toolset::default(),
            catalog: DescriptionCatalog::builtin(),
            params: ChatParams::default(),
        }
    }

    /// Routes or parses the request and plans every dispatchable
    /// sub-request against `doc`. Proposal ids are `p-{first_id}`,
    /// `p-{first_id + 1}`, ... Plans that stay unusable after the retry come
    /// back as Failed proposals; backend failures abort the whole request.
    pub fn submit(
        &self,
        doc: &ProtocolDocument,
        input: &RequestInput,
        first_id: usize,
    ) -> Result<Dispatch, AgentError> {
        let subrequests = match input {
            RequestInput::Text(text) => route(text, &self.gateway, &self.params)?,
            RequestInput::Structured(json) => parse_structured_request(json)?,
        };
        let memory = match input {
            RequestInput::Text(_) => Some(build_memory(doc, &self.catalog)),
            RequestInput::Structured(_) => None,
        };
        let mut proposals = Vec::new();
        let mut not_dispatchable = Vec::new();
        for sub in &subrequests {
            if !sub.is_dispatchable() {
                not_dispatchable.push(sub.clone());
                continue;
            }
            let id = format!("p-{}", first_id + proposals.len());
            let proposal = match (&sub.structured, &memory) {
                (Some(structured), _) => structured_proposal(id, sub, doc, structured),
                (None, Some(memory)) => {
                    match plan(sub, doc, memory, &self.gateway, &self.toolset, &self.params) {
                        Ok(outcome) => {
                            let mut p = Proposal {
                                id,
                                subrequest: sub.clone(),
                                retrieved: outcome.retrieved,
                                actions: outcome.actions,
                                plan_text: outcome.plan_text,
                                status: ProposalStatus::Pending,
                                low_confidence: outcome.low_confidence,
                                error: None,
                            };
                            if let Some(e) = outcome.error {
                                p.fail(&e.code, e.message);
                            }
                            p
                        }
                        Err(e @ AgentError::MalformedPlan(_)) => {
                            failed(id, sub, e.code(), e.to_string())
                        }
                        Err(e) => return Err(e),
                    }
                }
                (None, None) => unreachable!("structured input always carries its parsed request"),
            };
            proposals.push(proposal);
        }
        Ok(Dispatch {
            subrequests,
            proposals,
            not_dispatchable,
        })
    }
}

fn failed(id: String, sub: &SubRequest, code: &str, message: String) -> Proposal {
    Proposal {
        id,
        subrequest: sub.clone(),
        retrieved: RetrievedContext::default(),
        actions: Vec::new(),
        plan_text: String::new(),
        status: ProposalStatus::Failed,
        low_confidence: false,
        error: Some(ProposalError {
            code: code.to_string(),
            message,
        }),
    }
}

fn structured_proposal(
    id: String,
    sub: &SubRequest,
    doc: &ProtocolDocument,
    request: &crate::StructuredRequest,
) -> Proposal {
    match plan_structured(doc, request) {
        Ok(p) => Proposal {
            id,
            subrequest: sub.clone(),
            retrieved: p.retrieved,
            low_confidence: p.ambiguous && p.actions.len() == 1,
            actions: p.actions,
            plan_text: p.plan_text,
            status: ProposalStatus::Pending,
            error: None,
        },
        Err(message) => failed(id, sub, crate::planner::UNRESOLVED_REFERENCE, message),
    }
}
