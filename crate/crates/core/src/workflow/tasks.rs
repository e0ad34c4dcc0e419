use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::state::{StoredReport, TaskRecord};
use super::{CorrectionTask, Phase, PreferenceTask, Task, WorkflowError};
use crate::corpus::{CaseRecord, ReportDocument, ReportSource};
use crate::text::sha256_hex;

/// `{prefix}-{16 hex digits}` derived from `parts`; reveals nothing about
/// them.
pub fn opaque_id(prefix: &str, parts: &[&str]) -> String {
    format!("{prefix}-{}", &sha256_hex(parts.join("\u{1f}"))[..16])
}

/// Commitment to a task's slot-to-source mapping, checked again at analysis.
pub fn blinding_digest(task_id: &str, sources: &[ReportSource]) -> String {
    let mut parts = vec![task_id];
    parts.extend(sources.iter().map(|s| s.as_str()));
    sha256_hex(parts.join("\u{1f}"))
}

pub(crate) fn derived_seed(parts: &[&str]) -> u64 {
    let digest = sha256_hex(parts.join("\u{1f}"));
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

/// Tasks plus everything they reference, ready to be committed to a
/// workflow.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskBatch {
    pub cases: Vec<CaseRecord>,
    pub reports: Vec<StoredReport>,
    pub tasks: Vec<TaskRecord>,
}

impl TaskBatch {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.tasks.iter().map(|r| &r.task)
    }

    pub fn extend(&mut self, other: TaskBatch) {
        for c in other.cases {
            if !self.cases.iter().any(|x| x.case_id == c.case_id) {
                self.cases.push(c);
            }
        }
        self.reports.extend(other.reports);
        self.tasks.extend(other.tasks);
    }
}

fn store(doc: &ReportDocument, phase: Phase, seed: u64, task_id: &str) -> StoredReport {
    let id = opaque_id("r", &[&phase.to_string(), &seed.to_string(), task_id, doc.report_id()]);
    StoredReport { origin_report_id: doc.report_id().to_string(), document: doc.clone().with_id(id) }
}

fn one_report<'a>(
    reports: &'a [ReportDocument],
    case_id: &str,
    source: ReportSource,
) -> Result<&'a ReportDocument, WorkflowError> {
    let found: Vec<&ReportDocument> =
        reports.iter().filter(|r| r.case_id() == case_id && r.source() == source).collect();
    match found.as_slice() {
        [one] => Ok(one),
        [] => Err(WorkflowError::MissingReport { case_id: case_id.into(), source_kind: source }),
        many => Err(WorkflowError::DuplicateReport { case_id: case_id.into(), source_kind: source, count: many.len() }),
    }
}

/// A blinded pair. `variant` distinguishes several tasks on one case.
pub(crate) fn preference_pair(
    case_id: &str,
    original: &ReportDocument,
    candidate: &ReportDocument,
    phase: Phase,
    seed: u64,
    variant: &str,
    batch: &mut TaskBatch,
) {
    let phase_s = phase.to_string();
    let seed_s = seed.to_string();
    let task_id = opaque_id("t", &[&phase_s, &seed_s, case_id, variant]);
    let blinding_seed = derived_seed(&["blind", &phase_s, &seed_s, case_id, variant]);
    let original_in_a = ChaCha8Rng::seed_from_u64(blinding_seed).random_bool(0.5);
    let (a, b) = if original_in_a { (original, candidate) } else { (candidate, original) };
    let (sa, sb) = (store(a, phase, seed, &task_id), store(b, phase, seed, &task_id));
    let task = Task::Preference(PreferenceTask {
        task_id: task_id.clone(),
        case_id: case_id.to_string(),
        slot_a: sa.document.report_id().to_string(),
        slot_b: sb.document.report_id().to_string(),
        blinding_seed,
        phase,
    });
    let blinding_digest = blinding_digest(&task_id, &[a.source(), b.source()]);
    batch.reports.extend([sa, sb]);
    batch.tasks.push(TaskRecord { task, blinding_digest });
}

/// One preference task per case pairing its HUMAN_ORIGINAL report with its
/// MODEL_GENERATED report; slot order comes from a coin flip seeded per task.
pub fn generate_preference_tasks(
    cases: &[CaseRecord],
    reports: &[ReportDocument],
    seed: u64,
) -> Result<TaskBatch, WorkflowError> {
    let mut batch = TaskBatch { cases: cases.to_vec(), ..Default::default() };
    for case in cases {
        let original = one_report(reports, &case.case_id, ReportSource::HumanOriginal)?;
        let candidate = one_report(reports, &case.case_id, ReportSource::ModelGenerated)?;
        preference_pair(&case.case_id, original, candidate, Phase::Preference, seed, "", &mut batch);
    }
    Ok(batch)
}

/// Two correction tasks per case, one showing the HUMAN_ORIGINAL report and
/// one the MODEL_GENERATED report.
pub fn generate_correction_tasks(
    cases: &[CaseRecord],
    reports: &[ReportDocument],
    seed: u64,
) -> Result<TaskBatch, WorkflowError> {
    let mut batch = TaskBatch { cases: cases.to_vec(), ..Default::default() };
    let seed_s = seed.to_string();
    for case in cases {
        for source in [ReportSource::HumanOriginal, ReportSource::ModelGenerated] {
            let doc = one_report(reports, &case.case_id, source)?;
            let task_id = opaque_id("t", &["correction", &seed_s, &case.case_id, doc.report_id()]);
            let stored = store(doc, Phase::Correction, seed, &task_id);
            let task = Task::Correction(CorrectionTask {
                task_id: task_id.clone(),
                case_id: case.case_id.clone(),
                report_id: stored.document.report_id().to_string(),
            });
            batch.tasks.push(TaskRecord { task, blinding_digest: blinding_digest(&task_id, &[source]) });
            batch.reports.push(stored);
        }
    }
    Ok(batch)
}
