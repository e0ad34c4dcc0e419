use std::collections::HashMap;

use super::{check_lengths, MetricError};
use crate::metrics::tokenize::TokenSequence;

const MAX_N: usize = 4;

/// Smoothing for sentence-level diagnostics. Corpus BLEU is always unsmoothed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BleuSmoothing {
    #[default]
    None,
    /// Add one to matched and total counts for n >= 2.
    AddOne,
}

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and candidate n-gram totals for n = 1..4.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct BleuStats {
    matches: [usize; MAX_N],
    totals: [usize; MAX_N],
    cand_len: usize,
    ref_len: usize,
}

impl BleuStats {
    fn of(candidate: &[String], reference: &[String]) -> Self {
        let mut s = BleuStats { cand_len: candidate.len(), ref_len: reference.len(), ..Default::default() };
        for n in 1..=MAX_N {
            let cand = ngram_counts(candidate, n);
            let refs = ngram_counts(reference, n);
            s.totals[n - 1] = candidate.len().saturating_sub(n - 1);
            s.matches[n - 1] = cand.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
        }
        s
    }

    fn add(&mut self, o: &BleuStats) {
        for n in 0..MAX_N {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.cand_len += o.cand_len;
        self.ref_len += o.ref_len;
    }

    fn score(&self, smoothing: BleuSmoothing) -> f64 {
        if self.cand_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..MAX_N {
            let (mut m, mut t) = (self.matches[n] as f64, self.totals[n] as f64);
            if smoothing == BleuSmoothing::AddOne && n > 0 {
                m += 1.0;
                t += 1.0;
            }
            if m == 0.0 || t == 0.0 {
                return 0.0;
            }
            log_sum += (m / t).ln();
        }
        let bp = if self.cand_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        } else {
            1.0
        };
        bp * (log_sum / MAX_N as f64).exp()
    }
}

/// Corpus-level BLEU-4: clipped n-gram matches and candidate totals are
/// summed over all pairs before taking precisions, with a single corpus
/// brevity penalty. No smoothing, so any zero precision yields 0.
pub fn bleu4(candidates: &[TokenSequence], references: &[TokenSequence]) -> Result<f64, MetricError> {
    check_lengths(candidates.len(), references.len())?;
    if candidates.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut total = BleuStats::default();
    for (c, r) in candidates.iter().zip(references) {
        total.add(&BleuStats::of(c, r));
    }
    Ok(total.score(BleuSmoothing::None))
}

/// BLEU-4 of one pair.
pub fn sentence_bleu4(candidate: &TokenSequence, reference: &TokenSequence, smoothing: BleuSmoothing) -> f64 {
    BleuStats::of(candidate, reference).score(smoothing)
}
