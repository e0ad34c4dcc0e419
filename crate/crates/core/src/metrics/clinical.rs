//! Clinical classification metrics over finding labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_lengths, MetricError};
use crate::labeler::{FindingCategory, LabelValue, LabelVector};

/// How an UNCERTAIN label counts when binarizing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertainPolicy {
    #[default]
    Negative,
    Positive,
}

impl UncertainPolicy {
    pub fn binarize(self, v: LabelValue) -> bool {
        match v {
            LabelValue::Positive => true,
            LabelValue::Uncertain => self == UncertainPolicy::Positive,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl F1Score {
    /// Precision, recall and F1 from summed counts; each is 0 when its
    /// denominator is 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        F1Score { f1, precision, recall, tp, fp, fn_ }
    }
}

fn counts(
    predicted: &[LabelVector],
    target: &[LabelVector],
    category: FindingCategory,
    policy: UncertainPolicy,
) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, t) in predicted.iter().zip(target) {
        match (policy.binarize(p.get(category)), policy.binarize(t.get(category))) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fn_)
}

/// Micro-averaged F1: TP/FP/FN summed over every (report, category) pair in
/// `categories`.
pub fn micro_f1(
    predicted: &[LabelVector],
    target: &[LabelVector],
    categories: &[FindingCategory],
    policy: UncertainPolicy,
) -> Result<F1Score, MetricError> {
    check_lengths(predicted.len(), target.len())?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for &c in categories {
        let (a, b, d) = counts(predicted, target, c, policy);
        tp += a;
        fp += b;
        fn_ += d;
    }
    Ok(F1Score::from_counts(tp, fp, fn_))
}

/// Per-category F1, keyed by category wire name.
pub fn per_category_f1(
    predicted: &[LabelVector],
    target: &[LabelVector],
    categories: &[FindingCategory],
    policy: UncertainPolicy,
) -> Result<BTreeMap<String, F1Score>, MetricError> {
    check_lengths(predicted.len(), target.len())?;
    Ok(categories
        .iter()
        .map(|&c| {
            let (tp, fp, fn_) = counts(predicted, target, c, policy);
            (c.as_str().to_string(), F1Score::from_counts(tp, fp, fn_))
        })
        .collect())
}

/// Hard (majority) and soft (mean) consensus over binary expert annotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusLabel {
    pub category: FindingCategory,
    pub hard: bool,
    pub soft: f64,
    pub n_annotations: usize,
}

pub fn majority_and_soft(category: FindingCategory, annotations: &[bool]) -> Result<ConsensusLabel, MetricError> {
    if annotations.is_empty() {
        return Err(MetricError::TooFew { needed: 1, got: 0 });
    }
    let positives = annotations.iter().filter(|&&a| a).count();
    let soft = positives as f64 / annotations.len() as f64;
    Ok(ConsensusLabel { category, hard: soft > 0.5, soft, n_annotations: annotations.len() })
}
