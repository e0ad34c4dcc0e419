//! Request and response bodies of the v1 API. Nothing here carries a
//! report's source.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use radeval_core::corpus::ReportDocument;
use radeval_core::text::sha256_hex;
use radeval_core::workflow::{
    Choice, CorrectionResponse, Edit, PreferenceResponse, Response, Task, WorkflowState,
};
use serde::{Deserialize, Serialize};

/// JSON schema covering every body in this module.
pub const API_SCHEMA: &str = include_str!("../schema/api.schema.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub rater_id: String,
    pub access_code: String,
}

/// A report as shown to raters. Edit spans index `text` in Unicode scalar
/// values, and `text_hash` is the SHA-256 of `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportView {
    pub report_id: String,
    pub findings: String,
    pub impression: String,
    pub text: String,
    pub impression_offset: usize,
    pub text_hash: String,
}

impl From<&ReportDocument> for ReportView {
    fn from(doc: &ReportDocument) -> Self {
        let text = doc.text();
        ReportView {
            report_id: doc.report_id().to_string(),
            findings: doc.findings().to_string(),
            impression: doc.impression().to_string(),
            text_hash: sha256_hex(&text),
            impression_offset: doc.impression_offset(),
            text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskPayload {
    Preference { task_id: String, case_id: String, image_uri: String, report_a: ReportView, report_b: ReportView },
    Correction { task_id: String, case_id: String, image_uri: String, report: ReportView },
}

pub fn image_uri(case_id: &str) -> String {
    format!("/v1/cases/{case_id}/image")
}

impl TaskPayload {
    /// The blinded view of `task`; `None` if a referenced report is missing.
    pub fn from_task(task: &Task, state: &WorkflowState) -> Option<Self> {
        let view = |id: &str| state.report(id).map(ReportView::from);
        Some(match task {
            Task::Preference(t) => TaskPayload::Preference {
                task_id: t.task_id.clone(),
                case_id: t.case_id.clone(),
                image_uri: image_uri(&t.case_id),
                report_a: view(&t.slot_a)?,
                report_b: view(&t.slot_b)?,
            },
            Task::Correction(t) => TaskPayload::Correction {
                task_id: t.task_id.clone(),
                case_id: t.case_id.clone(),
                image_uri: image_uri(&t.case_id),
                report: view(&t.report_id)?,
            },
        })
    }

    pub fn task_id(&self) -> &str {
        match self {
            TaskPayload::Preference { task_id, .. } | TaskPayload::Correction { task_id, .. } => task_id,
        }
    }

    pub fn case_id(&self) -> &str {
        match self {
            TaskPayload::Preference { case_id, .. } | TaskPayload::Correction { case_id, .. } => case_id,
        }
    }
}

/// `done` means the rater's queue is finished; auth failures are errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextTask {
    Task { task: TaskPayload },
    Done,
}

/// A response as submitted; the rater comes from the session and the
/// timestamp from the server clock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Submission {
    Preference {
        task_id: String,
        choice: Choice,
        justification: String,
    },
    Correction {
        task_id: String,
        image_quality_ok: Option<bool>,
        #[serde(default)]
        edits: Vec<Edit>,
        text_hash: String,
    },
}

impl Submission {
    pub fn into_response(self, rater_id: &str, timestamp: DateTime<Utc>) -> Response {
        let rater_id = rater_id.to_string();
        match self {
            Submission::Preference { task_id, choice, justification } => {
                Response::Preference(PreferenceResponse { task_id, rater_id, choice, justification, timestamp })
            }
            Submission::Correction { task_id, image_quality_ok, edits, text_hash } => {
                Response::Correction(CorrectionResponse { task_id, rater_id, image_quality_ok, edits, text_hash, timestamp })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitAck {
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tasks: usize,
    pub complete: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterProgress {
    pub assigned: usize,
    pub answered: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub tasks: Counts,
    pub responses: usize,
    pub flagged: usize,
    pub by_phase: BTreeMap<String, Counts>,
    pub raters: BTreeMap<String, RaterProgress>,
}

impl Progress {
    pub fn of(state: &WorkflowState) -> Self {
        let mut p = Progress::default();
        for (task_id, record) in &state.tasks {
            let phase = record.task.phase();
            let complete = state.is_complete(task_id);
            for counts in [&mut p.tasks, p.by_phase.entry(phase.to_string()).or_default()] {
                counts.tasks += 1;
                counts.complete += usize::from(complete);
            }
        }
        p.responses = state.responses.values().map(BTreeMap::len).sum();
        p.flagged = state.flagged.len();
        for rater_id in state.raters.keys() {
            let queue = state.queues.get(rater_id).map_or(&[][..], Vec::as_slice);
            let answered = queue.iter().filter(|t| state.responses.get(*t).is_some_and(|m| m.contains_key(rater_id))).count();
            p.raters.insert(rater_id.clone(), RaterProgress { assigned: queue.len(), answered });
        }
        p
    }
}
