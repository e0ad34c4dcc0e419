use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::assign::{assign_raters, AssignmentPlan};
use super::edits::validate_edit_spans;
use super::log::EventLog;
use super::tasks::TaskBatch;
use super::{AnnotationEvent, EventPayload, Phase, RaterProfile, Response, Task, TaskKind, WorkflowError};
use crate::corpus::{CaseRecord, ReportDocument, ReportSource};
use crate::text::sha256_hex;

/// A report as shown in tasks: `document.report_id()` is the opaque id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredReport {
    pub origin_report_id: String,
    pub document: ReportDocument,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: Task,
    pub blinding_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub seq: u64,
    pub response: Response,
}

/// Everything derivable from the event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkflowState {
    pub next_seq: u64,
    pub cases: BTreeMap<String, CaseRecord>,
    pub reports: BTreeMap<String, StoredReport>,
    pub tasks: BTreeMap<String, TaskRecord>,
    pub raters: BTreeMap<String, RaterProfile>,
    /// Per phase, (rater_id, case_id) pairs barred from assignment.
    pub exclusions: BTreeMap<Phase, BTreeSet<(String, String)>>,
    pub assignments: BTreeMap<String, Vec<String>>,
    pub queues: BTreeMap<String, Vec<String>>,
    /// task_id -> rater_id -> response
    pub responses: BTreeMap<String, BTreeMap<String, ResponseRecord>>,
    /// (case_id, task_id, rater_id) where the image-quality gate failed.
    pub flagged: BTreeSet<(String, String, String)>,
}

impl WorkflowState {
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a AnnotationEvent>) -> Self {
        let mut s = WorkflowState::default();
        for e in events {
            s.apply(e);
        }
        s
    }

    /// Folds one event in. Events are validated before they are logged, so
    /// this never fails.
    pub fn apply(&mut self, event: &AnnotationEvent) {
        self.next_seq = event.seq + 1;
        match &event.payload {
            EventPayload::CaseRegistered { case } => {
                self.cases.insert(case.case_id.clone(), case.clone());
            }
            EventPayload::ReportRegistered { report } => {
                self.reports.insert(report.document.report_id().to_string(), report.clone());
            }
            EventPayload::TaskCreated { task, blinding_digest } => {
                let record = TaskRecord { task: task.clone(), blinding_digest: blinding_digest.clone() };
                self.tasks.insert(task.task_id().to_string(), record);
            }
            EventPayload::RaterRegistered { profile } => {
                self.raters.insert(profile.rater_id.clone(), profile.clone());
            }
            EventPayload::Excluded { rater_id, case_id, phase } => {
                self.exclusions.entry(*phase).or_default().insert((rater_id.clone(), case_id.clone()));
            }
            EventPayload::Assigned { task_id, rater_ids } => {
                self.assignments.insert(task_id.clone(), rater_ids.clone());
            }
            EventPayload::QueueOrdered { rater_id, task_ids } => {
                self.queues.entry(rater_id.clone()).or_default().extend(task_ids.iter().cloned());
            }
            EventPayload::ResponseRecorded { response } => {
                let task_id = response.task_id().to_string();
                let rater_id = response.rater_id().to_string();
                if let Some(task) = self.tasks.get(&task_id) {
                    let case_id = task.task.case_id().to_string();
                    if let Some(p) = self.raters.get_mut(&rater_id) {
                        p.history.insert((case_id.clone(), task.task.kind()));
                    }
                    if let Response::Correction(c) = response {
                        if c.image_quality_ok == Some(false) {
                            self.flagged.insert((case_id, task_id.clone(), rater_id.clone()));
                        }
                    }
                }
                self.responses
                    .entry(task_id)
                    .or_default()
                    .insert(rater_id, ResponseRecord { seq: event.seq, response: response.clone() });
            }
        }
    }

    pub fn is_excluded(&self, rater_id: &str, case_id: &str, phase: Phase) -> bool {
        self.exclusions.get(&phase).is_some_and(|s| s.contains(&(rater_id.to_string(), case_id.to_string())))
    }

    pub fn task(&self, task_id: &str) -> Option<&Task> {
        self.tasks.get(task_id).map(|r| &r.task)
    }

    pub fn report(&self, report_id: &str) -> Option<&ReportDocument> {
        self.reports.get(report_id).map(|r| &r.document)
    }

    pub fn source_of(&self, report_id: &str) -> Option<ReportSource> {
        self.report(report_id).map(ReportDocument::source)
    }

    pub fn responses_for(&self, task_id: &str) -> impl Iterator<Item = &ResponseRecord> {
        self.responses.get(task_id).into_iter().flat_map(|m| m.values())
    }

    pub fn is_complete(&self, task_id: &str) -> bool {
        let assigned = self.assignments.get(task_id).map_or(0, Vec::len);
        assigned > 0 && self.responses.get(task_id).map_or(0, BTreeMap::len) == assigned
    }

    /// The first task in the rater's queue they have not answered.
    pub fn next_task_for(&self, rater_id: &str) -> Option<&Task> {
        let answered = |t: &String| self.responses.get(t).is_some_and(|m| m.contains_key(rater_id));
        self.queues.get(rater_id)?.iter().find(|t| !answered(t)).and_then(|t| self.task(t))
    }

    /// Whether any task on `case_id` is assigned to `rater_id`.
    pub fn rater_sees_case(&self, rater_id: &str, case_id: &str) -> bool {
        self.queues
            .get(rater_id)
            .is_some_and(|q| q.iter().any(|t| self.task(t).is_some_and(|t| t.case_id() == case_id)))
    }

    /// Checks a submission; `Ok(Some(seq))` means an identical response is
    /// already recorded under `seq`.
    pub fn check_response(&self, response: &Response) -> Result<Option<u64>, WorkflowError> {
        let task_id = response.task_id();
        let rater_id = response.rater_id();
        let task = self.task(task_id).ok_or_else(|| WorkflowError::UnknownTask(task_id.into()))?;
        if !self.raters.contains_key(rater_id) {
            return Err(WorkflowError::UnknownRater(rater_id.into()));
        }
        if !self.assignments.get(task_id).is_some_and(|rs| rs.iter().any(|r| r == rater_id)) {
            return Err(WorkflowError::Unassigned { task_id: task_id.into(), rater_id: rater_id.into() });
        }
        if task.kind() != response.kind() {
            return Err(WorkflowError::WrongKind { task_id: task_id.into(), expected: task.kind() });
        }
        if let Some(prev) = self.responses.get(task_id).and_then(|m| m.get(rater_id)) {
            return if prev.response.same_content(response) {
                Ok(Some(prev.seq))
            } else {
                Err(WorkflowError::Conflict { task_id: task_id.into(), rater_id: rater_id.into() })
            };
        }
        match (response, task) {
            (Response::Preference(p), _) => {
                if p.justification.trim().is_empty() {
                    return Err(WorkflowError::validation("justification", "must not be empty"));
                }
            }
            (Response::Correction(c), Task::Correction(t)) => {
                let quality_ok = c
                    .image_quality_ok
                    .ok_or_else(|| WorkflowError::validation("image_quality_ok", "must be answered"))?;
                if !quality_ok && !c.edits.is_empty() {
                    return Err(WorkflowError::validation("edits", "must be empty when the image quality gate fails"));
                }
                let text = self.report(&t.report_id).ok_or_else(|| WorkflowError::UnknownReport(t.report_id.clone()))?.text();
                if c.text_hash != sha256_hex(&text) {
                    return Err(WorkflowError::validation("text_hash", "does not match the displayed report text"));
                }
                validate_edit_spans(&text, &c.edits)?;
            }
            (Response::Correction(_), Task::Preference(_)) => unreachable!("kind checked above"),
        }
        Ok(None)
    }
}

/// The single writer: validates, appends to the log, then folds into state.
#[derive(Debug)]
pub struct Workflow {
    log: EventLog,
    state: WorkflowState,
}

impl Workflow {
    pub fn in_memory() -> Self {
        Workflow { log: EventLog::in_memory(), state: WorkflowState::default() }
    }

    fn snapshot_path(log: &Path) -> PathBuf {
        let mut p = log.as_os_str().to_owned();
        p.push(".snapshot");
        PathBuf::from(p)
    }

    /// Opens the log at `path`, starting from its snapshot when one exists.
    pub fn open(path: &Path) -> Result<Self, WorkflowError> {
        let (log, events) = EventLog::open(path)?;
        let snap = Self::snapshot_path(path);
        let mut state = match std::fs::read(&snap) {
            Ok(bytes) => serde_json::from_slice::<WorkflowState>(&bytes)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => WorkflowState::default(),
            Err(e) => return Err(e.into()),
        };
        if state.next_seq > events.len() as u64 {
            state = WorkflowState::default();
        }
        let from = state.next_seq;
        for e in events.iter().filter(|e| e.seq >= from) {
            state.apply(e);
        }
        Ok(Workflow { log, state })
    }

    /// Writes the current state next to the log so the next open skips
    /// replaying the events it covers.
    pub fn write_snapshot(&self) -> Result<(), WorkflowError> {
        let Some(path) = self.log.path() else { return Ok(()) };
        let snap = Self::snapshot_path(path);
        let tmp = snap.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(&self.state)?)?;
        std::fs::rename(&tmp, &snap)?;
        Ok(())
    }

    pub fn state(&self) -> &WorkflowState {
        &self.state
    }

    fn commit(&mut self, payload: EventPayload) -> Result<u64, WorkflowError> {
        let event = AnnotationEvent { seq: self.state.next_seq, payload };
        self.log.append(&event)?;
        self.state.apply(&event);
        Ok(event.seq)
    }

    /// Registers cases, reports and tasks. Re-adding an identical batch is a
    /// no-op; a differing record under an existing id is an error.
    pub fn add_batch(&mut self, batch: &TaskBatch) -> Result<(), WorkflowError> {
        for c in &batch.cases {
            if self.state.cases.get(&c.case_id).is_some_and(|old| old != c) {
                return Err(WorkflowError::DuplicateId(c.case_id.clone()));
            }
        }
        for r in &batch.reports {
            if self.state.reports.get(r.document.report_id()).is_some_and(|old| old != r) {
                return Err(WorkflowError::DuplicateId(r.document.report_id().into()));
            }
        }
        for t in &batch.tasks {
            if self.state.tasks.get(t.task.task_id()).is_some_and(|old| old != t) {
                return Err(WorkflowError::DuplicateId(t.task.task_id().into()));
            }
            if !batch.cases.iter().any(|c| c.case_id == t.task.case_id()) && !self.state.cases.contains_key(t.task.case_id()) {
                return Err(WorkflowError::validation("case_id", format!("task {} references unknown case", t.task.task_id())));
            }
            for id in t.task.report_ids() {
                if !batch.reports.iter().any(|r| r.document.report_id() == id) && !self.state.reports.contains_key(id) {
                    return Err(WorkflowError::UnknownReport(id.into()));
                }
            }
        }
        for c in &batch.cases {
            if !self.state.cases.contains_key(&c.case_id) {
                self.commit(EventPayload::CaseRegistered { case: c.clone() })?;
            }
        }
        for r in &batch.reports {
            if !self.state.reports.contains_key(r.document.report_id()) {
                self.commit(EventPayload::ReportRegistered { report: r.clone() })?;
            }
        }
        for t in &batch.tasks {
            if !self.state.tasks.contains_key(t.task.task_id()) {
                self.commit(EventPayload::TaskCreated { task: t.task.clone(), blinding_digest: t.blinding_digest.clone() })?;
            }
        }
        Ok(())
    }

    pub fn register_rater(&mut self, profile: RaterProfile) -> Result<(), WorkflowError> {
        match self.state.raters.get(&profile.rater_id) {
            Some(_) => Ok(()),
            None => self.commit(EventPayload::RaterRegistered { profile: RaterProfile { history: Default::default(), ..profile } }).map(|_| ()),
        }
    }

    /// Bars `rater_id` from tasks of `phase` on `case_id`.
    pub fn add_exclusion(&mut self, rater_id: &str, case_id: &str, phase: Phase) -> Result<(), WorkflowError> {
        if self.state.assignments.iter().any(|(t, rs)| {
            rs.iter().any(|r| r == rater_id)
                && self.state.task(t).is_some_and(|t| t.case_id() == case_id && t.phase() == phase)
        }) {
            return Err(WorkflowError::validation("exclusions", format!("{rater_id} is already assigned to {case_id}")));
        }
        if !self.state.is_excluded(rater_id, case_id, phase) {
            self.commit(EventPayload::Excluded { rater_id: rater_id.into(), case_id: case_id.into(), phase })?;
        }
        Ok(())
    }

    /// Commits a plan after checking it against current tasks, raters and
    /// exclusions.
    pub fn apply_plan(&mut self, plan: &AssignmentPlan) -> Result<(), WorkflowError> {
        for (task_id, raters) in &plan.assignments {
            let task = self.state.task(task_id).ok_or_else(|| WorkflowError::UnknownTask(task_id.clone()))?;
            if self.state.assignments.contains_key(task_id) {
                return Err(WorkflowError::validation("assignments", format!("task {task_id} already assigned")));
            }
            let distinct: BTreeSet<&String> = raters.iter().collect();
            if distinct.len() != raters.len() {
                return Err(WorkflowError::validation("assignments", format!("task {task_id} repeats a rater")));
            }
            for r in raters {
                if !self.state.raters.contains_key(r) {
                    return Err(WorkflowError::UnknownRater(r.clone()));
                }
                if self.state.is_excluded(r, task.case_id(), task.phase()) {
                    return Err(WorkflowError::validation("assignments", format!("{r} is excluded from {}", task.case_id())));
                }
            }
        }
        for (task_id, rater_ids) in &plan.assignments {
            self.commit(EventPayload::Assigned { task_id: task_id.clone(), rater_ids: rater_ids.clone() })?;
        }
        for (rater_id, task_ids) in &plan.queues {
            self.commit(EventPayload::QueueOrdered { rater_id: rater_id.clone(), task_ids: task_ids.clone() })?;
        }
        Ok(())
    }

    /// Plans and commits assignments for every unassigned task using all
    /// registered raters and current exclusions.
    pub fn assign_pending(&mut self, per_task: usize, seed: u64) -> Result<AssignmentPlan, WorkflowError> {
        let raters: Vec<String> = self.state.raters.keys().cloned().collect();
        let mut plan = AssignmentPlan::default();
        for phase in [Phase::Preference, Phase::Correction, Phase::Collaboration] {
            let tasks: Vec<Task> = self
                .state
                .tasks
                .values()
                .filter(|r| r.task.phase() == phase && !self.state.assignments.contains_key(r.task.task_id()))
                .map(|r| r.task.clone())
                .collect();
            if tasks.is_empty() {
                continue;
            }
            let excluded = self.state.exclusions.get(&phase).cloned().unwrap_or_default();
            let part = assign_raters(&tasks, &raters, per_task, &excluded, seed)?;
            plan.assignments.extend(part.assignments);
            for (r, q) in part.queues {
                plan.queues.entry(r).or_default().extend(q);
            }
        }
        self.apply_plan(&plan)?;
        Ok(plan)
    }

    /// Validates and appends a response. Resubmitting identical content
    /// returns the original sequence number without a new event.
    pub fn record_response(&mut self, response: Response) -> Result<u64, WorkflowError> {
        match self.state.check_response(&response)? {
            Some(seq) => Ok(seq),
            None => self.commit(EventPayload::ResponseRecorded { response }),
        }
    }

    pub fn next_task(&self, rater_id: &str) -> Option<&Task> {
        self.state.next_task_for(rater_id)
    }

    pub fn completed_kinds(&self, kind: TaskKind) -> impl Iterator<Item = &Task> {
        self.state.tasks.values().map(|r| &r.task).filter(move |t| t.kind() == kind && self.state.is_complete(t.task_id()))
    }
}
