//! Aggregation of recorded responses into result tables.
//!
//! A [`Study`] is the unblinded, flattened view of a workflow state: one
//! [`PreferenceRating`] per preference response and one [`Assessment`] per
//! correction response. The summaries are pure functions of those records
//! and do not depend on their order.

mod errors;
mod export;
mod preference;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DatasetTag, ReportSource, Stratum};
use crate::metrics::bootstrap::{DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use crate::metrics::{bootstrap_ci, MetricEntry, MetricError, Statistic};
use crate::workflow::{blinding_digest, Choice, ErrorReason, Response, Task, WorkflowState};

pub use errors::{
    error_rate_summary, error_type_distribution, overlap_analysis, ErrorGroup, ErrorSummary, ErrorTypeGroup,
    ErrorTypeSummary, OverlapCounts, OverlapGroup, OverlapSummary,
};
pub use export::{export_results, read_results, ExportedFiles, LONG_HEADER, RESULTS_SCHEMA};
pub use preference::{preference_distribution, PreferenceGroup, PreferenceSummary};

/// Ratings a preference task needs before it can be counted.
pub const RATINGS_PER_PAIR: usize = 2;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("task {task_id}: slot sources do not match the digest recorded at generation")]
    BlindingMismatch { task_id: String },
    #[error("task {task_id} references unknown {what} {id}")]
    Dangling { task_id: String, what: &'static str, id: String },
    #[error("task {task_id} does not pair an original report with a candidate")]
    UnexpectedPair { task_id: String },
    #[error("task {task_id} has {got} ratings, needs {needed}")]
    IncompleteTask { task_id: String, got: usize, needed: usize },
    #[error("case {case_id} has no assessment of its {source_kind} report")]
    MissingSource { case_id: String, source_kind: ReportSource },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Bootstrap settings for every interval in a summary. `n_resamples == 0`
/// skips intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { n_resamples: DEFAULT_RESAMPLES, level: DEFAULT_LEVEL, seed: 0 }
    }
}

impl AnalysisConfig {
    /// Point estimate `numerator / values.len()` with a bootstrap interval
    /// of `statistic` over `values`.
    pub(crate) fn estimate(&self, numerator: usize, values: &[f64], statistic: Statistic) -> Result<MetricEntry, MetricError> {
        let point = numerator as f64 / values.len() as f64;
        if self.n_resamples == 0 {
            return Ok(MetricEntry::point(point));
        }
        let ci = bootstrap_ci(values, statistic, self.n_resamples, self.level, self.seed)?;
        Ok(MetricEntry { point, ci_lower: Some(ci.lower), ci_upper: Some(ci.upper) })
    }
}

/// A preference choice mapped back to report sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    CandidatePreferred,
    OriginalPreferred,
    Equivalent,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::CandidatePreferred, Verdict::OriginalPreferred, Verdict::Equivalent];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::CandidatePreferred => "candidate_preferred",
            Verdict::OriginalPreferred => "original_preferred",
            Verdict::Equivalent => "equivalent",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRating {
    pub task_id: String,
    pub case_id: String,
    pub rater_id: String,
    pub dataset_tag: DatasetTag,
    pub stratum: Stratum,
    pub candidate_source: ReportSource,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTag {
    pub reason: ErrorReason,
    pub clinically_significant: bool,
}

/// One rater's correction of one report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub task_id: String,
    pub case_id: String,
    pub rater_id: String,
    pub dataset_tag: DatasetTag,
    pub stratum: Stratum,
    pub source: ReportSource,
    /// False when the rater rejected the image; such assessments carry no
    /// errors and are left out of every rate.
    pub quality_ok: bool,
    pub errors: Vec<ErrorTag>,
}

impl Assessment {
    pub fn n_errors(&self) -> usize {
        self.errors.len()
    }

    pub fn n_significant(&self) -> usize {
        self.errors.iter().filter(|e| e.clinically_significant).count()
    }

    pub fn n_reason(&self, reason: ErrorReason) -> usize {
        self.errors.iter().filter(|e| e.reason == reason).count()
    }
}

/// Which preference tasks [`Study::from_state`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Include {
    /// Every recorded response, so partial tasks surface as errors later.
    #[default]
    All,
    CompleteOnly,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub preferences: Vec<PreferenceRating>,
    pub assessments: Vec<Assessment>,
}

impl Study {
    /// Unblinds every recorded response. Each preference task's slot
    /// sources are checked against its generation-time digest.
    pub fn from_state(state: &WorkflowState, include: Include) -> Result<Study, AnalysisError> {
        let mut study = Study::default();
        for (task_id, record) in &state.tasks {
            if include == Include::CompleteOnly && !state.is_complete(task_id) {
                continue;
            }
            let dangling = |what, id: &str| AnalysisError::Dangling { task_id: task_id.clone(), what, id: id.to_string() };
            let case = state.cases.get(record.task.case_id()).ok_or_else(|| dangling("case", record.task.case_id()))?;
            let source = |report_id: &str| state.source_of(report_id).ok_or_else(|| dangling("report", report_id));
            match &record.task {
                Task::Preference(t) => {
                    let (a, b) = (source(&t.slot_a)?, source(&t.slot_b)?);
                    if blinding_digest(task_id, &[a, b]) != record.blinding_digest {
                        return Err(AnalysisError::BlindingMismatch { task_id: task_id.clone() });
                    }
                    let (candidate_source, candidate_in_a) = match (a.is_candidate(), b.is_candidate()) {
                        (true, false) => (a, true),
                        (false, true) => (b, false),
                        _ => return Err(AnalysisError::UnexpectedPair { task_id: task_id.clone() }),
                    };
                    for r in state.responses_for(task_id) {
                        let Response::Preference(p) = &r.response else { continue };
                        let verdict = match (p.choice, candidate_in_a) {
                            (Choice::Equivalent, _) => Verdict::Equivalent,
                            (Choice::A, true) | (Choice::B, false) => Verdict::CandidatePreferred,
                            _ => Verdict::OriginalPreferred,
                        };
                        study.preferences.push(PreferenceRating {
                            task_id: task_id.clone(),
                            case_id: case.case_id.clone(),
                            rater_id: p.rater_id.clone(),
                            dataset_tag: case.dataset_tag,
                            stratum: case.stratum,
                            candidate_source,
                            verdict,
                        });
                    }
                }
                Task::Correction(t) => {
                    let source = source(&t.report_id)?;
                    for r in state.responses_for(task_id) {
                        let Response::Correction(c) = &r.response else { continue };
                        study.assessments.push(Assessment {
                            task_id: task_id.clone(),
                            case_id: case.case_id.clone(),
                            rater_id: c.rater_id.clone(),
                            dataset_tag: case.dataset_tag,
                            stratum: case.stratum,
                            source,
                            quality_ok: c.image_quality_ok != Some(false),
                            errors: c
                                .edits
                                .iter()
                                .map(|e| ErrorTag { reason: e.reason, clinically_significant: e.clinically_significant })
                                .collect(),
                        });
                    }
                }
            }
        }
        Ok(study)
    }
}

/// Every summary of a study plus run parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyResults {
    pub preference: PreferenceSummary,
    pub errors: ErrorSummary,
    pub error_types: ErrorTypeSummary,
    pub overlap: OverlapSummary,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl StudyResults {
    pub fn compute(study: &Study, config: &AnalysisConfig) -> Result<StudyResults, AnalysisError> {
        let mut metadata = BTreeMap::new();
        metadata.insert("n_resamples".into(), config.n_resamples.into());
        metadata.insert("level".into(), config.level.into());
        metadata.insert("seed".into(), config.seed.into());
        metadata.insert("n_preference_ratings".into(), study.preferences.len().into());
        metadata.insert("n_assessments".into(), study.assessments.len().into());
        metadata.insert(
            "n_quality_rejected".into(),
            study.assessments.iter().filter(|a| !a.quality_ok).count().into(),
        );
        Ok(StudyResults {
            preference: preference_distribution(&study.preferences)?,
            errors: error_rate_summary(&study.assessments, config)?,
            error_types: error_type_distribution(&study.assessments, config)?,
            overlap: overlap_analysis(&study.assessments)?,
            metadata,
        })
    }
}
