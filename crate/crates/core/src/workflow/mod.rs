//! Blinded human-evaluation workflow.
//!
//! Tasks are generated offline in [`TaskBatch`]es, assigned to raters, and
//! every state change is an [`AnnotationEvent`] in an append-only
//! [`EventLog`]. [`WorkflowState`] is a pure fold over the events, so
//! replaying a log reproduces the live state exactly.

mod assign;
mod collab;
mod edits;
mod log;
mod state;
mod tasks;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::ReportSource;
use crate::text::Span;

pub use assign::{assign_raters, AssignmentPlan};
pub use collab::{generate_collaboration_round, CollaborationPolicy, CollaborationRound};
pub use edits::{apply_edits, validate_edit_spans};
pub use log::{EventLog, LogBackend};
pub use state::{ResponseRecord, StoredReport, TaskRecord, Workflow, WorkflowState};
pub use tasks::{
    blinding_digest, generate_correction_tasks, generate_preference_tasks, opaque_id, TaskBatch,
};

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("unknown rater {0}")]
    UnknownRater(String),
    #[error("unknown report {0}")]
    UnknownReport(String),
    #[error("rater {rater_id} is not assigned to task {task_id}")]
    Unassigned { task_id: String, rater_id: String },
    #[error("task {task_id} expects a {expected} response")]
    WrongKind { task_id: String, expected: TaskKind },
    #[error("rater {rater_id} already submitted a different response to task {task_id}")]
    Conflict { task_id: String, rater_id: String },
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
    #[error("case {case_id} has no {source_kind} report")]
    MissingReport { case_id: String, source_kind: ReportSource },
    #[error("case {case_id} has {count} {source_kind} reports, expected one")]
    DuplicateReport { case_id: String, source_kind: ReportSource, count: usize },
    #[error("task {task_id} has {eligible} eligible raters, needs {needed}")]
    Infeasible { task_id: String, eligible: usize, needed: usize },
    #[error("no completed correction phase")]
    NoCorrectionPhase,
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("event log corrupt at byte {offset}: {message}")]
    Corrupt { offset: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl WorkflowError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        WorkflowError::Validation { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Preference,
    Correction,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Preference => "preference",
            TaskKind::Correction => "correction",
        })
    }
}

/// Which round a preference task belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Preference,
    Correction,
    Collaboration,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Preference => "preference",
            Phase::Correction => "correction",
            Phase::Collaboration => "collaboration",
        })
    }
}

impl std::str::FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "preference" => Ok(Phase::Preference),
            "correction" => Ok(Phase::Correction),
            "collaboration" => Ok(Phase::Collaboration),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterProfile {
    pub rater_id: String,
    #[serde(default)]
    pub qualifications: String,
    /// (case_id, kind) pairs completed; only ever appended to.
    #[serde(default)]
    pub history: std::collections::BTreeSet<(String, TaskKind)>,
}

impl RaterProfile {
    pub fn new(rater_id: impl Into<String>, qualifications: impl Into<String>) -> Self {
        RaterProfile { rater_id: rater_id.into(), qualifications: qualifications.into(), history: Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferenceTask {
    pub task_id: String,
    pub case_id: String,
    pub slot_a: String,
    pub slot_b: String,
    pub blinding_seed: u64,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorrectionTask {
    pub task_id: String,
    pub case_id: String,
    pub report_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    Preference(PreferenceTask),
    Correction(CorrectionTask),
}

impl Task {
    pub fn task_id(&self) -> &str {
        match self {
            Task::Preference(t) => &t.task_id,
            Task::Correction(t) => &t.task_id,
        }
    }

    pub fn case_id(&self) -> &str {
        match self {
            Task::Preference(t) => &t.case_id,
            Task::Correction(t) => &t.case_id,
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Preference(_) => TaskKind::Preference,
            Task::Correction(_) => TaskKind::Correction,
        }
    }

    pub fn phase(&self) -> Phase {
        match self {
            Task::Preference(t) => t.phase,
            Task::Correction(_) => Phase::Correction,
        }
    }

    /// Report ids shown by the task, slot order for preference tasks.
    pub fn report_ids(&self) -> Vec<&str> {
        match self {
            Task::Preference(t) => vec![&t.slot_a, &t.slot_b],
            Task::Correction(t) => vec![&t.report_id],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Choice {
    A,
    B,
    Equivalent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorReason {
    IncorrectFinding,
    IncorrectLocation,
    IncorrectSeverity,
}

impl ErrorReason {
    pub const ALL: [ErrorReason; 3] =
        [ErrorReason::IncorrectFinding, ErrorReason::IncorrectLocation, ErrorReason::IncorrectSeverity];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorReason::IncorrectFinding => "INCORRECT_FINDING",
            ErrorReason::IncorrectLocation => "INCORRECT_LOCATION",
            ErrorReason::IncorrectSeverity => "INCORRECT_SEVERITY",
        }
    }
}

/// One replacement of a character span of the displayed report text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edit {
    pub span: Span,
    pub reason: ErrorReason,
    pub clinically_significant: bool,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceResponse {
    pub task_id: String,
    pub rater_id: String,
    pub choice: Choice,
    pub justification: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionResponse {
    pub task_id: String,
    pub rater_id: String,
    /// Answer to the image-quality gate; must be present.
    pub image_quality_ok: Option<bool>,
    #[serde(default)]
    pub edits: Vec<Edit>,
    /// sha256 of the displayed text the spans index into.
    pub text_hash: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Response {
    Preference(PreferenceResponse),
    Correction(CorrectionResponse),
}

impl Response {
    pub fn task_id(&self) -> &str {
        match self {
            Response::Preference(r) => &r.task_id,
            Response::Correction(r) => &r.task_id,
        }
    }

    pub fn rater_id(&self) -> &str {
        match self {
            Response::Preference(r) => &r.rater_id,
            Response::Correction(r) => &r.rater_id,
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            Response::Preference(_) => TaskKind::Preference,
            Response::Correction(_) => TaskKind::Correction,
        }
    }

    /// Equality ignoring the submission timestamp.
    pub fn same_content(&self, other: &Response) -> bool {
        match (self, other) {
            (Response::Preference(a), Response::Preference(b)) => {
                PreferenceResponse { timestamp: b.timestamp, ..a.clone() } == *b
            }
            (Response::Correction(a), Response::Correction(b)) => {
                CorrectionResponse { timestamp: b.timestamp, ..a.clone() } == *b
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventPayload {
    CaseRegistered { case: crate::corpus::CaseRecord },
    ReportRegistered { report: StoredReport },
    TaskCreated { task: Task, blinding_digest: String },
    RaterRegistered { profile: RaterProfile },
    Excluded { rater_id: String, case_id: String, phase: Phase },
    Assigned { task_id: String, rater_ids: Vec<String> },
    QueueOrdered { rater_id: String, task_ids: Vec<String> },
    ResponseRecorded { response: Response },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub seq: u64,
    pub payload: EventPayload,
}
