use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::DecodeError;

pub type TokenId = u32;

/// Opaque conditioning handle, e.g. an image reference.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextId(pub String);

impl From<&str> for ContextId {
    fn from(s: &str) -> Self {
        ContextId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    eos: TokenId,
}

impl Vocabulary {
    /// `eos` must be one of `tokens`; tokens must be unique.
    pub fn new(tokens: Vec<String>, eos: &str) -> Result<Self, DecodeError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(DecodeError::InvalidModel(format!("duplicate token {t:?}")));
            }
        }
        let eos = *index.get(eos).ok_or_else(|| DecodeError::InvalidModel(format!("eos {eos:?} not in vocabulary")))?;
        Ok(Vocabulary { tokens, index, eos })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Result<TokenId, DecodeError> {
        self.index.get(token).copied().ok_or_else(|| DecodeError::OutOfVocabulary(token.to_string()))
    }
}

/// `p(y_l | y_<l, context)` as natural-log probabilities indexed by token id.
pub trait ConditionalTokenModel: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    fn next_log_probs(&self, context: &ContextId, prefix: &[TokenId]) -> Result<Vec<f64>, DecodeError>;

    /// One distribution per prefix, in input order. Backends that can
    /// evaluate prefixes concurrently should override this.
    fn next_log_probs_batch(&self, context: &ContextId, prefixes: &[&[TokenId]]) -> Result<Vec<Vec<f64>>, DecodeError> {
        prefixes.iter().map(|p| self.next_log_probs(context, p)).collect()
    }
}

/// Checks width and that the exponentiated values sum to 1 within 1e-6.
pub fn check_distribution(vocabulary: &Vocabulary, log_probs: &[f64]) -> Result<(), DecodeError> {
    if log_probs.len() != vocabulary.len() {
        return Err(DecodeError::WrongWidth { expected: vocabulary.len(), got: log_probs.len() });
    }
    let sum: f64 = log_probs.iter().map(|lp| lp.exp()).sum();
    if log_probs.iter().any(|lp| lp.is_nan() || *lp > 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(DecodeError::InvalidDistribution { sum });
    }
    Ok(())
}
