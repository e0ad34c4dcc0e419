use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalysisConfig, AnalysisError, Assessment};
use crate::corpus::{DatasetTag, ReportSource, Stratum};
use crate::metrics::{MetricEntry, Statistic};
use crate::workflow::ErrorReason;

type GroupKey = (DatasetTag, Stratum, ReportSource);

/// Error rates for one (dataset, stratum, source) group. The denominator is
/// the number of report-assessments, so a report corrected by two raters
/// counts twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorGroup {
    pub dataset_tag: DatasetTag,
    pub stratum: Stratum,
    pub source: ReportSource,
    pub n_assessments: usize,
    pub n_cases: usize,
    pub mean_errors: MetricEntry,
    pub mean_significant: MetricEntry,
    pub any_error: MetricEntry,
    pub any_significant: MetricEntry,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub groups: Vec<ErrorGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTypeGroup {
    pub dataset_tag: DatasetTag,
    pub stratum: Stratum,
    pub source: ReportSource,
    pub n_assessments: usize,
    /// Mean errors per assessment, keyed by reason wire name.
    pub by_reason: BTreeMap<String, MetricEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorTypeSummary {
    pub groups: Vec<ErrorTypeGroup>,
}

/// Quality-passing assessments grouped and sorted so results do not depend
/// on input order.
fn grouped(assessments: &[Assessment]) -> Vec<(GroupKey, Vec<&Assessment>)> {
    let mut groups: BTreeMap<GroupKey, Vec<&Assessment>> = BTreeMap::new();
    for a in assessments.iter().filter(|a| a.quality_ok) {
        groups.entry((a.dataset_tag, a.stratum, a.source)).or_default().push(a);
    }
    for list in groups.values_mut() {
        list.sort_by(|x, y| (&x.case_id, &x.task_id, &x.rater_id).cmp(&(&y.case_id, &y.task_id, &y.rater_id)));
    }
    groups.into_iter().collect()
}

fn tally(list: &[&Assessment], count: impl Fn(&Assessment) -> usize) -> (usize, Vec<f64>) {
    let counts: Vec<usize> = list.iter().map(|a| count(a)).collect();
    (counts.iter().sum(), counts.iter().map(|&c| c as f64).collect())
}

pub fn error_rate_summary(assessments: &[Assessment], config: &AnalysisConfig) -> Result<ErrorSummary, AnalysisError> {
    let groups = grouped(assessments)
        .into_par_iter()
        .map(|((dataset_tag, stratum, source), list)| {
            let (total, errors) = tally(&list, Assessment::n_errors);
            let (significant, sig) = tally(&list, Assessment::n_significant);
            let with_any = errors.iter().filter(|&&e| e > 0.0).count();
            let with_sig = sig.iter().filter(|&&e| e > 0.0).count();
            Ok(ErrorGroup {
                dataset_tag,
                stratum,
                source,
                n_assessments: list.len(),
                n_cases: list.iter().map(|a| &a.case_id).collect::<BTreeSet<_>>().len(),
                mean_errors: config.estimate(total, &errors, Statistic::Mean)?,
                mean_significant: config.estimate(significant, &sig, Statistic::Mean)?,
                any_error: config.estimate(with_any, &errors, Statistic::FractionPositive)?,
                any_significant: config.estimate(with_sig, &sig, Statistic::FractionPositive)?,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(ErrorSummary { groups })
}

pub fn error_type_distribution(
    assessments: &[Assessment],
    config: &AnalysisConfig,
) -> Result<ErrorTypeSummary, AnalysisError> {
    let groups = grouped(assessments)
        .into_par_iter()
        .map(|((dataset_tag, stratum, source), list)| {
            let mut by_reason = BTreeMap::new();
            for reason in ErrorReason::ALL {
                let (total, values) = tally(&list, |a| a.n_reason(reason));
                by_reason.insert(reason.as_str().to_string(), config.estimate(total, &values, Statistic::Mean)?);
            }
            Ok(ErrorTypeGroup { dataset_tag, stratum, source, n_assessments: list.len(), by_reason })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    Ok(ErrorTypeSummary { groups })
}

/// Case counts by which report had at least one error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub candidate_only: usize,
    pub original_only: usize,
    pub both: usize,
    pub neither: usize,
}

impl OverlapCounts {
    fn add(&mut self, candidate: bool, original: bool) {
        match (candidate, original) {
            (true, true) => self.both += 1,
            (true, false) => self.candidate_only += 1,
            (false, true) => self.original_only += 1,
            (false, false) => self.neither += 1,
        }
    }

    /// Share of cases with an error in exactly one report among cases with
    /// an error in either; `None` when no case has an error.
    pub fn non_overlap_fraction(&self) -> Option<f64> {
        let exclusive = self.candidate_only + self.original_only;
        let any = exclusive + self.both;
        (any > 0).then(|| exclusive as f64 / any as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapGroup {
    pub dataset_tag: DatasetTag,
    pub candidate_source: ReportSource,
    pub n_cases: usize,
    /// Cases left out because every assessment of one report failed the
    /// image-quality gate.
    pub n_quality_skipped: usize,
    pub any: OverlapCounts,
    pub significant: OverlapCounts,
    pub non_overlap_any: Option<f64>,
    pub non_overlap_significant: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapSummary {
    pub groups: Vec<OverlapGroup>,
}

#[derive(Default)]
struct SourceFlags {
    assessed: bool,
    passed: bool,
    any: bool,
    significant: bool,
}

/// Per dataset and candidate source: which cases have at least one
/// (clinically significant) error in the candidate report, the original, or
/// both. A report has an error when any rater found one.
pub fn overlap_analysis(assessments: &[Assessment]) -> Result<OverlapSummary, AnalysisError> {
    let mut cases: BTreeMap<&str, (DatasetTag, BTreeMap<ReportSource, SourceFlags>)> = BTreeMap::new();
    for a in assessments {
        let flags = cases.entry(&a.case_id).or_insert((a.dataset_tag, BTreeMap::new())).1.entry(a.source).or_default();
        flags.assessed = true;
        if a.quality_ok {
            flags.passed = true;
            flags.any |= a.n_errors() > 0;
            flags.significant |= a.n_significant() > 0;
        }
    }
    let mut groups: BTreeMap<(DatasetTag, ReportSource), OverlapGroup> = BTreeMap::new();
    for (case_id, (dataset_tag, sources)) in &cases {
        let missing = |source_kind| AnalysisError::MissingSource { case_id: case_id.to_string(), source_kind };
        let original = sources.get(&ReportSource::HumanOriginal).ok_or_else(|| missing(ReportSource::HumanOriginal))?;
        let mut candidates = sources.iter().filter(|(s, _)| s.is_candidate()).peekable();
        if candidates.peek().is_none() {
            return Err(missing(ReportSource::ModelGenerated));
        }
        for (&candidate_source, candidate) in candidates {
            let group = groups.entry((*dataset_tag, candidate_source)).or_insert_with(|| OverlapGroup {
                dataset_tag: *dataset_tag,
                candidate_source,
                n_cases: 0,
                n_quality_skipped: 0,
                any: OverlapCounts::default(),
                significant: OverlapCounts::default(),
                non_overlap_any: None,
                non_overlap_significant: None,
            });
            debug_assert!(candidate.assessed && original.assessed);
            if !(candidate.passed && original.passed) {
                group.n_quality_skipped += 1;
                continue;
            }
            group.n_cases += 1;
            group.any.add(candidate.any, original.any);
            group.significant.add(candidate.significant, original.significant);
        }
    }
    let groups = groups
        .into_values()
        .map(|mut g| {
            g.non_overlap_any = g.any.non_overlap_fraction();
            g.non_overlap_significant = g.significant.non_overlap_fraction();
            g
        })
        .collect();
    Ok(OverlapSummary { groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::ErrorTag;
    use proptest::prelude::*;

    fn assessment(case: usize, rater: &str, source: ReportSource, errors: &[(ErrorReason, bool)]) -> Assessment {
        Assessment {
            task_id: format!("t{case}-{}", source.as_str()),
            case_id: format!("c{case:04}"),
            rater_id: rater.into(),
            dataset_tag: DatasetTag::Us,
            stratum: Stratum::Abnormal,
            source,
            quality_ok: true,
            errors: errors
                .iter()
                .map(|&(reason, clinically_significant)| ErrorTag { reason, clinically_significant })
                .collect(),
        }
    }

    const F: (ErrorReason, bool) = (ErrorReason::IncorrectFinding, true);
    const L: (ErrorReason, bool) = (ErrorReason::IncorrectLocation, false);
    const NO_CI: AnalysisConfig = AnalysisConfig { n_resamples: 0, level: 0.95, seed: 0 };

    #[test]
    fn zero_one_two() {
        let list = [
            assessment(0, "r", ReportSource::ModelGenerated, &[]),
            assessment(1, "r", ReportSource::ModelGenerated, &[F]),
            assessment(2, "r", ReportSource::ModelGenerated, &[F, L]),
        ];
        let s = error_rate_summary(&list, &NO_CI).unwrap();
        let g = &s.groups[0];
        assert_eq!(g.mean_errors.point, 1.0);
        assert_eq!(g.any_error.point, 2.0 / 3.0);
        assert_eq!(g.mean_significant.point, 2.0 / 3.0);
        assert_eq!(g.n_cases, 3);
    }

    #[test]
    fn quality_rejected_assessments_are_not_counted() {
        let mut rejected = assessment(1, "r", ReportSource::ModelGenerated, &[]);
        rejected.quality_ok = false;
        let list = [assessment(0, "r", ReportSource::ModelGenerated, &[F]), rejected];
        assert_eq!(error_rate_summary(&list, &NO_CI).unwrap().groups[0].mean_errors.point, 1.0);
    }

    #[test]
    fn single_reason() {
        let list = [assessment(0, "r", ReportSource::ModelGenerated, &[F, F])];
        let g = &error_type_distribution(&list, &NO_CI).unwrap().groups[0];
        assert_eq!(g.by_reason["INCORRECT_FINDING"].point, 2.0);
        assert_eq!(g.by_reason["INCORRECT_LOCATION"].point, 0.0);
        assert_eq!(g.by_reason["INCORRECT_SEVERITY"].point, 0.0);
    }

    #[test]
    fn intervals_come_from_the_bootstrap() {
        let list: Vec<Assessment> =
            (0..30).map(|i| assessment(i, "r", ReportSource::ModelGenerated, &[F].repeat(i % 3))).collect();
        let config = AnalysisConfig { n_resamples: 400, level: 0.9, seed: 7 };
        let g = &error_rate_summary(&list, &config).unwrap().groups[0];
        let mut sorted = list.clone();
        sorted.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        let values: Vec<f64> = sorted.iter().map(|a| a.n_errors() as f64).collect();
        let ci = crate::metrics::bootstrap_ci(&values, Statistic::Mean, 400, 0.9, 7).unwrap();
        assert_eq!((g.mean_errors.ci_lower, g.mean_errors.ci_upper), (Some(ci.lower), Some(ci.upper)));
    }

    #[test]
    fn disjoint_error_sets() {
        let list = [
            assessment(0, "r", ReportSource::ModelGenerated, &[F]),
            assessment(0, "r", ReportSource::HumanOriginal, &[]),
            assessment(1, "r", ReportSource::ModelGenerated, &[]),
            assessment(1, "r", ReportSource::HumanOriginal, &[F]),
        ];
        let g = &overlap_analysis(&list).unwrap().groups[0];
        assert_eq!(g.significant.both, 0);
        assert_eq!(g.non_overlap_significant, Some(1.0));
    }

    #[test]
    fn missing_source() {
        let list = [assessment(0, "r", ReportSource::ModelGenerated, &[F])];
        assert!(matches!(
            overlap_analysis(&list),
            Err(AnalysisError::MissingSource { source_kind: ReportSource::HumanOriginal, .. })
        ));
    }

    fn arb_assessments() -> impl Strategy<Value = Vec<Assessment>> {
        let errs = proptest::collection::vec((0..3usize, any::<bool>()), 0..4);
        proptest::collection::vec((errs.clone(), errs, any::<bool>()), 1..200).prop_map(|cases| {
            cases
                .into_iter()
                .enumerate()
                .flat_map(|(i, (cand, orig, normal))| {
                    let tags = |v: &[(usize, bool)]| -> Vec<(ErrorReason, bool)> {
                        v.iter().map(|&(r, s)| (ErrorReason::ALL[r], s)).collect()
                    };
                    let mut pair = [
                        assessment(i, "r1", ReportSource::ModelGenerated, &tags(&cand)),
                        assessment(i, "r2", ReportSource::HumanOriginal, &tags(&orig)),
                    ];
                    if normal {
                        pair.iter_mut().for_each(|a| a.stratum = Stratum::Normal);
                    }
                    pair
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn rates_match_counting_oracle(list in arb_assessments()) {
            let s = error_rate_summary(&list, &NO_CI).unwrap();
            let t = error_type_distribution(&list, &NO_CI).unwrap();
            for (g, tg) in s.groups.iter().zip(&t.groups) {
                let mine: Vec<&Assessment> = list.iter().filter(|a| a.stratum == g.stratum && a.source == g.source).collect();
                let n = mine.len() as f64;
                let total: usize = mine.iter().map(|a| a.errors.len()).sum();
                let sig: usize = mine.iter().flat_map(|a| &a.errors).filter(|e| e.clinically_significant).count();
                prop_assert_eq!(g.mean_errors.point, total as f64 / n);
                prop_assert_eq!(g.mean_significant.point, sig as f64 / n);
                prop_assert!(g.mean_significant.point <= g.mean_errors.point);
                prop_assert_eq!(g.any_error.point, mine.iter().filter(|a| !a.errors.is_empty()).count() as f64 / n);
                for reason in ErrorReason::ALL {
                    let c = mine.iter().flat_map(|a| &a.errors).filter(|e| e.reason == reason).count();
                    prop_assert_eq!(tg.by_reason[reason.as_str()].point, c as f64 / n);
                }
            }
        }

        #[test]
        fn overlap_matches_set_operations(list in arb_assessments()) {
            let g = &overlap_analysis(&list).unwrap().groups[0];
            let with_sig = |source| -> BTreeSet<&str> {
                list.iter()
                    .filter(|a| a.source == source && a.n_significant() > 0)
                    .map(|a| a.case_id.as_str())
                    .collect()
            };
            let (cand, orig) = (with_sig(ReportSource::ModelGenerated), with_sig(ReportSource::HumanOriginal));
            prop_assert_eq!(g.significant.both, cand.intersection(&orig).count());
            prop_assert_eq!(g.significant.candidate_only, cand.difference(&orig).count());
            prop_assert_eq!(g.significant.original_only, orig.difference(&cand).count());
            prop_assert_eq!(g.n_cases, list.len() / 2);
            prop_assert!(g.significant.both <= cand.len().min(orig.len()));
        }

        #[test]
        fn zero_error_case_never_raises_rates(list in arb_assessments()) {
            let before = error_rate_summary(&list, &NO_CI).unwrap();
            let mut more = list.clone();
            more.push(assessment(9999, "r1", ReportSource::ModelGenerated, &[]));
            let after = error_rate_summary(&more, &NO_CI).unwrap();
            for a in &after.groups {
                if let Some(b) = before.groups.iter().find(|b| (b.stratum, b.source) == (a.stratum, a.source)) {
                    prop_assert!(a.mean_errors.point <= b.mean_errors.point);
                    prop_assert!(a.any_error.point <= b.any_error.point);
                    prop_assert!(a.mean_significant.point <= b.mean_significant.point);
                }
            }
        }

        #[test]
        fn order_independent(list in arb_assessments(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let config = AnalysisConfig { n_resamples: 50, level: 0.95, seed: 3 };
            let mut shuffled = list.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(error_rate_summary(&list, &config).unwrap(), error_rate_summary(&shuffled, &config).unwrap());
            prop_assert_eq!(error_type_distribution(&list, &config).unwrap(), error_type_distribution(&shuffled, &config).unwrap());
            prop_assert_eq!(overlap_analysis(&list).unwrap(), overlap_analysis(&shuffled).unwrap());
        }
    }
}
