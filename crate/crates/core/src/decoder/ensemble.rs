use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ConditionalTokenModel, ContextId};
use super::search::{nucleus_sample_with_rng, DecodeConfig};
use super::DecodeError;
use crate::labeler::{FindingCategory, LabelValue, Labeler};

const ATTACHED: &[&str] = &[".", ",", ";", ":", "?", "!", ")"];

/// Joins tokens with spaces; punctuation attaches to the preceding token.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        if !out.is_empty() && !ATTACHED.contains(&t) {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

/// Inverse of [`detokenize`] for plain report text: whitespace-separated
/// words with trailing punctuation split off.
pub(crate) fn split_report_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut tail = Vec::new();
        let mut w = word;
        while let Some(c) = w.chars().last().filter(|c| ATTACHED.contains(&c.to_string().as_str())) {
            tail.push(c.to_string());
            w = &w[..w.len() - c.len_utf8()];
        }
        if !w.is_empty() {
            out.push(w.to_string());
        }
        out.extend(tail.into_iter().rev());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleProbabilities {
    pub n_samples: usize,
    /// Samples labelled POSITIVE, per category.
    pub positive_counts: BTreeMap<FindingCategory, usize>,
    pub probabilities: BTreeMap<FindingCategory, f64>,
    /// Detokenized sampled reports, in draw order.
    pub samples: Vec<String>,
}

impl EnsembleProbabilities {
    pub fn get(&self, category: FindingCategory) -> f64 {
        self.probabilities.get(&category).copied().unwrap_or(0.0)
    }
}

/// Draws `config.n_samples` reports by nucleus sampling from one generator
/// seeded with `config.seed`, labels each, and returns the fraction labelled
/// POSITIVE per category.
pub fn ensemble_condition_probabilities(
    model: &dyn ConditionalTokenModel,
    context: &ContextId,
    config: &DecodeConfig,
    labeler: &Labeler,
) -> Result<EnsembleProbabilities, DecodeError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        let h = nucleus_sample_with_rng(model, context, config.nucleus_p, config.max_length, &mut rng)?;
        samples.push(detokenize(h.content_tokens()));
    }
    let mut positive_counts: BTreeMap<FindingCategory, usize> = FindingCategory::ALL.iter().map(|&c| (c, 0)).collect();
    for text in &samples {
        for (c, v) in labeler.label(text).iter() {
            if v == LabelValue::Positive {
                *positive_counts.get_mut(&c).expect("all categories present") += 1;
            }
        }
    }
    let n = config.n_samples as f64;
    let probabilities = positive_counts.iter().map(|(&c, &k)| (c, k as f64 / n)).collect();
    Ok(EnsembleProbabilities { n_samples: config.n_samples, positive_counts, probabilities, samples })
}
