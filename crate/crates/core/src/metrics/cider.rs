//! CIDEr-D: tf-idf weighted n-gram cosine similarity (n = 1..4) with
//! clipped candidate weights and a Gaussian length penalty, scaled by 10.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use super::bleu::ngram_counts;
use super::{check_lengths, MetricError};
use crate::metrics::tokenize::TokenSequence;

pub const CIDER_MAX_N: usize = 4;
pub const CIDER_SIGMA: f64 = 6.0;
pub const CIDER_SCALE: f64 = 10.0;

/// Document frequencies over a reference collection.
pub struct DocumentFrequencies<'a> {
    df: HashMap<&'a [String], usize>,
    log_n: f64,
}

impl<'a> DocumentFrequencies<'a> {
    pub fn new(corpus: &'a [TokenSequence]) -> Result<Self, MetricError> {
        if corpus.is_empty() {
            return Err(MetricError::EmptyCorpus);
        }
        let mut df = HashMap::new();
        for doc in corpus {
            let mut seen = HashSet::new();
            for n in 1..=CIDER_MAX_N {
                for g in ngram_counts(doc, n).into_keys() {
                    if seen.insert(g) {
                        *df.entry(g).or_insert(0) += 1;
                    }
                }
            }
        }
        Ok(Self { df, log_n: (corpus.len() as f64).ln() })
    }

    /// `ln N - ln max(1, df)`; unseen n-grams get the maximum weight.
    pub fn idf(&self, gram: &[String]) -> f64 {
        let df = self.df.get(gram).copied().unwrap_or(0).max(1);
        self.log_n - (df as f64).ln()
    }
}

struct Weighted<'t> {
    vecs: Vec<HashMap<&'t [String], f64>>,
    norms: Vec<f64>,
    len: usize,
}

fn weigh<'t>(tokens: &'t [String], df: &DocumentFrequencies<'_>) -> Weighted<'t> {
    let mut vecs = Vec::with_capacity(CIDER_MAX_N);
    let mut norms = Vec::with_capacity(CIDER_MAX_N);
    for n in 1..=CIDER_MAX_N {
        let v: HashMap<&[String], f64> =
            ngram_counts(tokens, n).into_iter().map(|(g, tf)| (g, tf as f64 * df.idf(g))).collect();
        norms.push(v.values().map(|x| x * x).sum::<f64>().sqrt());
        vecs.push(v);
    }
    Weighted { vecs, norms, len: tokens.len() }
}

fn pair_score(cand: &Weighted<'_>, refr: &Weighted<'_>) -> f64 {
    let delta = cand.len as f64 - refr.len as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut total = 0.0;
    for n in 0..CIDER_MAX_N {
        let mut val: f64 = cand.vecs[n]
            .iter()
            .map(|(g, &w)| {
                let r = refr.vecs[n].get(g).copied().unwrap_or(0.0);
                w.min(r) * r
            })
            .sum();
        if cand.norms[n] != 0.0 && refr.norms[n] != 0.0 {
            val /= cand.norms[n] * refr.norms[n];
        }
        total += val * penalty;
    }
    total / CIDER_MAX_N as f64 * CIDER_SCALE
}

/// Per-pair CIDEr-D scores with document frequencies from `corpus`.
pub fn cider_d_scores(
    candidates: &[TokenSequence],
    references: &[TokenSequence],
    corpus: &[TokenSequence],
) -> Result<Vec<f64>, MetricError> {
    check_lengths(candidates.len(), references.len())?;
    if candidates.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let df = DocumentFrequencies::new(corpus)?;
    Ok(candidates
        .par_iter()
        .zip(references)
        .map(|(c, r)| pair_score(&weigh(c, &df), &weigh(r, &df)))
        .collect())
}

/// Mean CIDEr-D over pairs.
pub fn cider_d(
    candidates: &[TokenSequence],
    references: &[TokenSequence],
    corpus: &[TokenSequence],
) -> Result<f64, MetricError> {
    let scores = cider_d_scores(candidates, references, corpus)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
