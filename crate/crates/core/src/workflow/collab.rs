use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::edits::apply_edits;
use super::state::WorkflowState;
use super::tasks::{opaque_id, preference_pair, TaskBatch};
use super::{Phase, Response, Task, WorkflowError};
use crate::corpus::ReportSource;

/// What to do when both correction raters edited the same model report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollaborationPolicy {
    /// Use the edits of whichever rater with edits submitted first.
    #[default]
    FirstCompleted,
    /// One edited variant, and one task, per rater with edits.
    BothVariants,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollaborationRound {
    pub batch: TaskBatch,
    /// (rater_id, case_id): raters who corrected the model report of a case
    /// may not judge its collaboration task.
    pub exclusions: BTreeSet<(String, String)>,
}

/// Builds clinician-AI reports from completed corrections of model reports
/// and pairs each against the case's HUMAN_ORIGINAL report. Only cases with
/// at least one edit on the model report produce tasks.
pub fn generate_collaboration_round(
    state: &WorkflowState,
    policy: CollaborationPolicy,
    seed: u64,
) -> Result<CollaborationRound, WorkflowError> {
    let corrected: Vec<(&Task, String)> = state
        .tasks
        .values()
        .filter_map(|r| match &r.task {
            Task::Correction(t) if state.source_of(&t.report_id) == Some(ReportSource::ModelGenerated) => {
                Some((&r.task, t.report_id.clone()))
            }
            _ => None,
        })
        .filter(|(t, _)| state.is_complete(t.task_id()))
        .collect();
    if corrected.is_empty() {
        return Err(WorkflowError::NoCorrectionPhase);
    }
    let mut round = CollaborationRound::default();
    let mut ordered = corrected;
    ordered.sort_by(|a, b| a.0.case_id().cmp(b.0.case_id()).then(a.0.task_id().cmp(b.0.task_id())));
    for (task, model_report_id) in ordered {
        let case_id = task.case_id();
        let mut with_edits: Vec<(u64, &str, &Vec<super::Edit>)> = state
            .responses_for(task.task_id())
            .filter_map(|rec| match &rec.response {
                Response::Correction(c) if !c.edits.is_empty() => Some((rec.seq, c.rater_id.as_str(), &c.edits)),
                _ => None,
            })
            .collect();
        if with_edits.is_empty() {
            continue;
        }
        with_edits.sort_by_key(|e| e.0);
        if policy == CollaborationPolicy::FirstCompleted {
            with_edits.truncate(1);
        }
        let original = state
            .reports
            .values()
            .find(|r| r.document.case_id() == case_id && r.document.source() == ReportSource::HumanOriginal)
            .ok_or_else(|| WorkflowError::MissingReport { case_id: case_id.into(), source_kind: ReportSource::HumanOriginal })?;
        let original_doc = original.document.clone().with_id(original.origin_report_id.clone());
        let model = &state.reports[&model_report_id];
        let model_doc = model.document.clone().with_id(model.origin_report_id.clone());
        for (_, rater_id, edits) in with_edits {
            let edited_id = opaque_id("e", &[task.task_id(), rater_id]);
            let edited = apply_edits(&model_doc, edits, edited_id)?;
            preference_pair(case_id, &original_doc, &edited, Phase::Collaboration, seed, rater_id, &mut round.batch);
        }
        if !round.batch.cases.iter().any(|c| c.case_id == case_id) {
            if let Some(c) = state.cases.get(case_id) {
                round.batch.cases.push(c.clone());
            }
        }
        for rec in state.responses_for(task.task_id()) {
            round.exclusions.insert((rec.response.rater_id().to_string(), case_id.to_string()));
        }
    }
    Ok(round)
}
