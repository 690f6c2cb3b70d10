use crate::{AgentError, SubRequest};
use protoagent_core::Action;
use protoagent_core::{EditResult, EntityRef, ProtocolDocument, Toolset};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProposalStatus {
    Pending,
    Approved,
    Rejected,
    Applied,
    Failed,
}

impl ProposalStatus {
    pub fn can_become(self, next: ProposalStatus) -> bool {
        use ProposalStatus::*;
        matches!(
            (self, next),
            (Pending, Approved) | (Pending, Rejected) | (Approved, Applied) | (Approved, Failed)
        )
    }
}

impl fmt::Display for ProposalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EssentialRef {
    pub entity_id: String,
    pub essential_name: String,
}

impl EssentialRef {
    pub fn new(entity_id: &str, essential_name: &str) -> Self {
        Self {
            entity_id: entity_id.to_string(),
            essential_name: essential_name.to_string(),
        }
    }
}

/// What the planner looked at while building a proposal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub entities: Vec<EntityRef>,
    pub essentials: Vec<EssentialRef>,
}

impl RetrievedContext {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.essentials.is_empty()
    }

    pub fn add_entity(&mut self, e: EntityRef) {
        if !self.entities.iter().any(|x| x.id == e.id) {
            self.entities.push(e);
        }
    }

    pub fn add_essential(&mut self, e: EssentialRef) {
        if !self.essentials.contains(&e) {
            self.essentials.push(e);
        }
    }

    pub fn merge(&mut self, other: &RetrievedContext) {
        for e in &other.entities {
            self.add_entity(e.clone());
        }
        for e in &other.essentials {
            self.add_essential(e.clone());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: String,
    pub subrequest: SubRequest,
    pub retrieved: RetrievedContext,
    pub actions: Vec<Action>,
    pub plan_text: String,
    pub status: ProposalStatus,
    /// Retrieval offered several candidates for a single-action plan.
    #[serde(default)]
    pub low_confidence: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ProposalError>,
}

impl Proposal {
    pub fn transition(&mut self, next: ProposalStatus) -> Result<(), AgentError> {
        if !self.status.can_become(next) {
            return Err(AgentError::InvalidStatus {
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        Ok(())
    }

    pub fn fail(&mut self, code: &str, message: impl Into<String>) {
        self.status = ProposalStatus::Failed;
        self.error = Some(ProposalError {
            code: code.to_string(),
            message: message.into(),
        });
    }
}

/// Applies an approved proposal. On success the proposal becomes Applied;
/// if any action fails it becomes Failed and `doc` is left as it was.
pub fn execute(
    proposal: &mut Proposal,
    doc: &ProtocolDocument,
    toolset: &Toolset,
) -> Result<EditResult, AgentError> {
    if proposal.status != ProposalStatus::Approved {
        return Err(AgentError::InvalidStatus {
            from: proposal.status,
            to: ProposalStatus::Applied,
        });
    }
    match toolset.apply_actions(doc, &proposal.actions) {
        Ok(result) => {
            proposal.status = ProposalStatus::Applied;
            Ok(result)
        }
        Err(e) => {
            proposal.fail(e.code(), e.to_string());
            Err(AgentError::Edit(e))
        }
    }
}

/// Approves a pending proposal and executes it: the one path from a
/// reviewer's "yes" to an edited document. On error the proposal carries
/// the same error and its status says why (Failed, or unchanged when it was
/// not pending).
pub fn approve(
    proposal: &mut Proposal,
    doc: &ProtocolDocument,
    toolset: &Toolset,
) -> Result<ProtocolDocument, ProposalError> {
    let as_error = |e: AgentError| ProposalError {
        code: e.code().to_string(),
        message: e.to_string(),
    };
    proposal
        .transition(ProposalStatus::Approved)
        .map_err(as_error)?;
    match execute(proposal, doc, toolset) {
        Ok(result) => Ok(result.document),
        Err(e) => Err(proposal.error.clone().unwrap_or_else(|| as_error(e))),
    }
}
