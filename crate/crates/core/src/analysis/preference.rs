use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, PreferenceRating, Verdict, RATINGS_PER_PAIR};
use crate::corpus::{DatasetTag, ReportSource, Stratum};

/// Preference results for one (dataset, stratum, candidate source) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceGroup {
    pub dataset_tag: DatasetTag,
    pub stratum: Stratum,
    pub candidate_source: ReportSource,
    pub n_tasks: usize,
    pub n_ratings: usize,
    pub candidate_preferred: f64,
    pub original_preferred: f64,
    pub equivalent: f64,
    /// Fraction of tasks where both raters preferred the original.
    pub both_prefer_original: f64,
    /// Fraction of tasks where at least one rater rated the candidate
    /// equivalent or better.
    pub at_least_one_not: f64,
    /// Pair counts indexed `[first][second]` in [`Verdict::ALL`] order, the
    /// first rater being the one with the smaller id.
    pub matrix: [[usize; 3]; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSummary {
    pub groups: Vec<PreferenceGroup>,
}

type GroupKey = (DatasetTag, Stratum, ReportSource);

/// Response-level 3-way fractions and pair-level agreement per group.
/// Every task present must have exactly two ratings.
pub fn preference_distribution(ratings: &[PreferenceRating]) -> Result<PreferenceSummary, AnalysisError> {
    let mut tasks: BTreeMap<&str, Vec<&PreferenceRating>> = BTreeMap::new();
    for r in ratings {
        tasks.entry(&r.task_id).or_default().push(r);
    }
    let mut groups: BTreeMap<GroupKey, (usize, [usize; 3], [[usize; 3]; 3])> = BTreeMap::new();
    for (task_id, mut pair) in tasks {
        if pair.len() != RATINGS_PER_PAIR {
            return Err(AnalysisError::IncompleteTask {
                task_id: task_id.to_string(),
                got: pair.len(),
                needed: RATINGS_PER_PAIR,
            });
        }
        pair.sort_by(|a, b| a.rater_id.cmp(&b.rater_id));
        let first = pair[0];
        let (n_tasks, verdicts, matrix) =
            groups.entry((first.dataset_tag, first.stratum, first.candidate_source)).or_default();
        *n_tasks += 1;
        for r in &pair {
            verdicts[r.verdict.index()] += 1;
        }
        matrix[pair[0].verdict.index()][pair[1].verdict.index()] += 1;
    }
    let groups = groups
        .into_iter()
        .map(|((dataset_tag, stratum, candidate_source), (n_tasks, verdicts, matrix))| {
            let n_ratings: usize = verdicts.iter().sum();
            let frac = |count: usize, total: usize| count as f64 / total as f64;
            let both_original = matrix[Verdict::OriginalPreferred.index()][Verdict::OriginalPreferred.index()];
            PreferenceGroup {
                dataset_tag,
                stratum,
                candidate_source,
                n_tasks,
                n_ratings,
                candidate_preferred: frac(verdicts[0], n_ratings),
                original_preferred: frac(verdicts[1], n_ratings),
                equivalent: frac(verdicts[2], n_ratings),
                both_prefer_original: frac(both_original, n_tasks),
                at_least_one_not: frac(n_tasks - both_original, n_tasks),
                matrix,
            }
        })
        .collect();
    Ok(PreferenceSummary { groups })
}
