//! File-backed session storage.
//!
//! Each session lives in its own directory:
//!
//! - `session.json`: id and creation time, written last on creation
//! - `original.xml`: the canonical upload
//! - `history.jsonl`: append-only events with full payloads
//! - `proposals.json`, `protocol.xml`: derived state
//!
//! The history is the source of truth. Every mutation appends to it first,
//! then rewrites the derived files through temp-file-and-rename, so a crash
//! at any point leaves a history that replays to a valid state. Loading
//! replays the history and repairs derived files that lag behind.

use chrono::{DateTime, Utc};
use protoagent_agent::{Dispatch, Proposal, ProposalError, ProposalStatus, RequestInput};
use protoagent_core::protocol::{hash_text, validate_syntax, SyntaxOptions};
use protoagent_core::{parse_protocol, serialize_protocol, ProtocolDocument, ValidationReport};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use thiserror::Error;

/// Kind, payload and optional (before, after) protocol hashes of an event not yet written.
type PendingEvent = (EventKind, Value, Option<(String, String)>);

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("protocol is not valid")]
    InvalidProtocol(ValidationReport),
    #[error("no session '{0}'")]
    UnknownSession(String),
    #[error("no proposal '{0}'")]
    UnknownProposal(String),
    #[error("proposal {id} is {status}, not Pending")]
    NotPending { id: String, status: ProposalStatus },
    #[error("session '{id}' is corrupt: {message}")]
    Corrupt { id: String, message: String },
    #[error("injected write fault")]
    InjectedFault,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    RequestSubmitted,
    ProposalCreated,
    Approved,
    Rejected,
    Applied,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub seq: u64,
    pub event: EventKind,
    pub at: DateTime<Utc>,
    /// sha256 of the JSON-encoded payload.
    pub payload_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after_hash: Option<String>,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub meta: SessionMeta,
    pub protocol: ProtocolDocument,
    pub proposals: Vec<Proposal>,
    pub history: Vec<HistoryEvent>,
}

impl Session {
    pub fn proposal(&self, id: &str) -> Option<&Proposal> {
        self.proposals.iter().find(|p| p.id == id)
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub struct SessionStore {
    root: PathBuf,
    syntax: SyntaxOptions,
    /// Remaining writes before an injected failure; negative means no limit.
    write_budget: AtomicI64,
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>, syntax: SyntaxOptions) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io(&root))?;
        Ok(Self {
            root,
            syntax,
            write_budget: AtomicI64::new(-1),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Test hook: fail every write after the next `writes` ones, as a crash
    /// would. `None` lifts the limit.
    pub fn set_write_budget(&self, writes: Option<u32>) {
        self.write_budget
            .store(writes.map_or(-1, i64::from), Ordering::SeqCst);
    }

    fn spend_write(&self) -> Result<(), StoreError> {
        let left = self.write_budget.load(Ordering::SeqCst);
        if left == 0 {
            return Err(StoreError::InjectedFault);
        }
        if left > 0 {
            self.write_budget.store(left - 1, Ordering::SeqCst);
        }
        Ok(())
    }

    fn write_atomic(&self, path: &Path, content: &str) -> Result<(), StoreError> {
        self.spend_write()?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, content).map_err(io(&tmp))?;
        fs::rename(&tmp, path).map_err(io(path))
    }

    fn dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        let valid = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
        let dir = self.root.join(id);
        if !valid || !dir.join("session.json").is_file() {
            return Err(StoreError::UnknownSession(id.to_string()));
        }
        Ok(dir)
    }

    pub fn create(&self, xml: &str) -> Result<Session, StoreError> {
        let report = validate_syntax(xml, &self.syntax);
        if !report.ok {
            return Err(StoreError::InvalidProtocol(report));
        }
        let protocol = parse_protocol(xml).map_err(|_| StoreError::InvalidProtocol(report))?;
        let canonical = serialize_protocol(&protocol);
        let meta = SessionMeta {
            id: uuid::Uuid::new_v4().to_string(),
            created_at: Utc::now(),
        };
        let dir = self.root.join(&meta.id);
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        self.write_atomic(&dir.join("original.xml"), &canonical)?;
        self.write_atomic(&dir.join("protocol.xml"), &canonical)?;
        self.write_atomic(&dir.join("proposals.json"), "[]\n")?;
        self.write_atomic(&dir.join("history.jsonl"), "")?;
        self.write_atomic(&dir.join("session.json"), &pretty(&meta))?;
        Ok(Session {
            meta,
            protocol,
            proposals: Vec::new(),
            history: Vec::new(),
        })
    }

    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids: Vec<String> = fs::read_dir(&self.root)
            .map_err(io(&self.root))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("session.json").is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// Rebuilds the session from its history and brings the derived files
    /// in line with it.
    pub fn load(&self, id: &str) -> Result<Session, StoreError> {
        let dir = self.dir(id)?;
        let corrupt = |message: String| StoreError::Corrupt {
            id: id.to_string(),
            message,
        };
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(io(&path))
        };
        let meta: SessionMeta =
            serde_json::from_str(&read("session.json")?).map_err(|e| corrupt(e.to_string()))?;
        let original =
            parse_protocol(&read("original.xml")?).map_err(|e| corrupt(e.to_string()))?;
        let history = parse_history(&read("history.jsonl")?).map_err(corrupt)?;
        let (protocol, proposals) = replay(original, &history).map_err(corrupt)?;

        let protocol_text = serialize_protocol(&protocol);
        let proposals_text = pretty(&proposals);
        if read("proposals.json").ok().as_deref() != Some(proposals_text.as_str()) {
            tracing::info!(session = %id, "repairing proposals.json from history");
            self.write_atomic(&dir.join("proposals.json"), &proposals_text)?;
        }
        if read("protocol.xml").ok().as_deref() != Some(protocol_text.as_str()) {
            tracing::info!(session = %id, "repairing protocol.xml from history");
            self.write_atomic(&dir.join("protocol.xml"), &protocol_text)?;
        }
        Ok(Session {
            meta,
            protocol,
            proposals,
            history,
        })
    }

    /// Current canonical XML as stored.
    pub fn protocol_xml(&self, id: &str) -> Result<String, StoreError> {
        Ok(serialize_protocol(&self.load(id)?.protocol))
    }

    fn append(
        &self,
        dir: &Path,
        session: &mut Session,
        events: Vec<PendingEvent>,
    ) -> Result<(), StoreError> {
        let mut lines = String::new();
        for (event, payload, hashes) in events {
            let e = HistoryEvent {
                seq: session.history.len() as u64 + 1,
                event,
                at: Utc::now(),
                payload_digest: hash_text(&payload.to_string()),
                before_hash: hashes.as_ref().map(|h| h.0.clone()),
                after_hash: hashes.map(|h| h.1),
                payload,
            };
            lines.push_str(&serde_json::to_string(&e).expect("event encodes"));
            lines.push('\n');
            session.history.push(e);
        }
        self.spend_write()?;
        let path = dir.join("history.jsonl");
        let mut file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(io(&path))?;
        file.write_all(lines.as_bytes()).map_err(io(&path))?;
        file.sync_data().map_err(io(&path))
    }

    fn write_derived(
        &self,
        dir: &Path,
        session: &Session,
        protocol_changed: bool,
    ) -> Result<(), StoreError> {
        self.write_atomic(&dir.join("proposals.json"), &pretty(&session.proposals))?;
        if protocol_changed {
            self.write_atomic(
                &dir.join("protocol.xml"),
                &serialize_protocol(&session.protocol),
            )?;
        }
        Ok(())
    }

    /// Records a submitted request and the proposals planned for it.
    pub fn record_dispatch(
        &self,
        id: &str,
        input: &RequestInput,
        dispatch: &Dispatch,
    ) -> Result<Session, StoreError> {
        let dir = self.dir(id)?;
        let mut session = self.load(id)?;
        let mut events = vec![(
            EventKind::RequestSubmitted,
            json!({
                "input": input,
                "subrequests": dispatch.subrequests,
                "not_dispatchable": dispatch.not_dispatchable,
            }),
            None,
        )];
        for p in &dispatch.proposals {
            events.push((
                EventKind::ProposalCreated,
                serde_json::to_value(p).expect("proposal encodes"),
                None,
            ));
        }
        self.append(&dir, &mut session, events)?;
        session.proposals.extend(dispatch.proposals.iter().cloned());
        self.write_derived(&dir, &session, false)?;
        Ok(session)
    }

    /// Rejects a Pending proposal.
    pub fn reject(&self, id: &str, proposal_id: &str) -> Result<Session, StoreError> {
        let dir = self.dir(id)?;
        let mut session = self.load(id)?;
        pending_index(&session, proposal_id)?;
        self.append(
            &dir,
            &mut session,
            vec![(
                EventKind::Rejected,
                json!({ "proposal_id": proposal_id }),
                None,
            )],
        )?;
        let (protocol, proposals) = replay_tail(&session)?;
        session.protocol = protocol;
        session.proposals = proposals;
        self.write_derived(&dir, &session, false)?;
        Ok(session)
    }

    /// Records the outcome of executing an approved proposal: the new
    /// document on success, the error on failure.
    pub fn record_execution(
        &self,
        id: &str,
        proposal_id: &str,
        outcome: Result<&ProtocolDocument, ProposalError>,
    ) -> Result<Session, StoreError> {
        let dir = self.dir(id)?;
        let mut session = self.load(id)?;
        pending_index(&session, proposal_id)?;
        let before = session.protocol.content_hash();
        let changed = outcome.is_ok();
        let event = match outcome {
            Ok(doc) => (
                EventKind::Applied,
                json!({ "proposal_id": proposal_id, "protocol_xml": serialize_protocol(doc) }),
                Some((before, doc.content_hash())),
            ),
            Err(error) => (
                EventKind::Failed,
                json!({ "proposal_id": proposal_id, "error": error }),
                Some((before.clone(), before)),
            ),
        };
        self.append(&dir, &mut session, vec![event])?;
        let (protocol, proposals) = replay_tail(&session)?;
        session.protocol = protocol;
        session.proposals = proposals;
        self.write_derived(&dir, &session, changed)?;
        Ok(session)
    }
}

fn pending_index(session: &Session, proposal_id: &str) -> Result<usize, StoreError> {
    let i = session
        .proposals
        .iter()
        .position(|p| p.id == proposal_id)
        .ok_or_else(|| StoreError::UnknownProposal(proposal_id.to_string()))?;
    let status = session.proposals[i].status;
    if status != ProposalStatus::Pending {
        return Err(StoreError::NotPending {
            id: proposal_id.to_string(),
            status,
        });
    }
    Ok(i)
}

fn replay_tail(session: &Session) -> Result<(ProtocolDocument, Vec<Proposal>), StoreError> {
    let mut proposals = session.proposals.clone();
    let mut protocol = session.protocol.clone();
    let last = session.history.last().expect("just appended");
    apply_event(&mut protocol, &mut proposals, last).map_err(|message| StoreError::Corrupt {
        id: session.meta.id.clone(),
        message,
    })?;
    Ok((protocol, proposals))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value encodes");
    s.push('\n');
    s
}

/// Parses the event log. An unparsable final line is a write cut short by a
/// crash and is ignored; an unparsable line elsewhere is corruption.
pub fn parse_history(text: &str) -> Result<Vec<HistoryEvent>, String> {
    let lines: Vec<&str> = text.split('\n').filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<HistoryEvent>(line) {
            Ok(e) => out.push(e),
            Err(_) if i + 1 == lines.len() => {
                tracing::warn!("ignoring truncated trailing history line");
            }
            Err(e) => return Err(format!("history line {}: {e}", i + 1)),
        }
    }
    Ok(out)
}

fn apply_event(
    protocol: &mut ProtocolDocument,
    proposals: &mut Vec<Proposal>,
    e: &HistoryEvent,
) -> Result<(), String> {
    let find = |proposals: &mut Vec<Proposal>| -> Result<usize, String> {
        let pid = e.payload["proposal_id"].as_str().unwrap_or_default();
        proposals
            .iter()
            .position(|p| p.id == pid)
            .ok_or_else(|| format!("event {} names unknown proposal '{pid}'", e.seq))
    };
    match e.event {
        EventKind::RequestSubmitted | EventKind::Approved => {}
        EventKind::ProposalCreated => {
            let p: Proposal = serde_json::from_value(e.payload.clone())
                .map_err(|err| format!("event {}: {err}", e.seq))?;
            proposals.push(p);
        }
        EventKind::Rejected => {
            let i = find(proposals)?;
            proposals[i].status = ProposalStatus::Rejected;
        }
        EventKind::Failed => {
            let i = find(proposals)?;
            let error: Option<ProposalError> =
                serde_json::from_value(e.payload["error"].clone()).ok();
            proposals[i].status = ProposalStatus::Failed;
            proposals[i].error = error;
        }
        EventKind::Applied => {
            let i = find(proposals)?;
            let xml = e.payload["protocol_xml"].as_str().unwrap_or_default();
            let doc = parse_protocol(xml).map_err(|err| format!("event {}: {err}", e.seq))?;
            if e.after_hash.as_deref() != Some(doc.content_hash().as_str()) {
                return Err(format!(
                    "event {} does not reproduce its recorded hash",
                    e.seq
                ));
            }
            *protocol = doc;
            proposals[i].status = ProposalStatus::Applied;
        }
    }
    Ok(())
}

/// Protocol and proposals after replaying `history` over `original`.
pub fn replay(
    original: ProtocolDocument,
    history: &[HistoryEvent],
) -> Result<(ProtocolDocument, Vec<Proposal>), String> {
    let mut protocol = original;
    let mut proposals = Vec::new();
    for e in history {
        apply_event(&mut protocol, &mut proposals, e)?;
    }
    Ok((protocol, proposals))
}
