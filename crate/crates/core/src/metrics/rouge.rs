use rayon::prelude::*;

use super::{check_lengths, MetricError};
use crate::metrics::tokenize::TokenSequence;

/// Recall weight of the LCS F-measure (the value used by the common
/// caption-evaluation toolkits).
pub const ROUGE_L_BETA: f64 = 1.2;

/// Length of the longest common subsequence, O(n·m) time, O(m) space.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F-measure of one pair; 0 when either side is empty.
pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_length(candidate, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    let b2 = ROUGE_L_BETA * ROUGE_L_BETA;
    (1.0 + b2) * precision * recall / (recall + b2 * precision)
}

/// Mean pairwise ROUGE-L.
pub fn rouge_l_corpus(candidates: &[TokenSequence], references: &[TokenSequence]) -> Result<f64, MetricError> {
    check_lengths(candidates.len(), references.len())?;
    if candidates.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let scores: Vec<f64> = candidates.par_iter().zip(references).map(|(c, r)| rouge_l(c, r)).collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
