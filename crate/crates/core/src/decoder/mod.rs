//! Autoregressive decoding over a pluggable conditional token model.
//!
//! A model maps `(context, prefix)` to a log-probability vector over its
//! [`Vocabulary`], which always includes an end-of-sequence token. Search
//! code never looks inside the model, so the toy Markov chain used in tests
//! and an external generator behind the line protocol are interchangeable.

mod ensemble;
mod markov;
mod model;
mod remote;
mod search;

pub use ensemble::{detokenize, ensemble_condition_probabilities, EnsembleProbabilities};
pub use markov::{MarkovTransition, ToyMarkovModel};
pub use model::{check_distribution, ConditionalTokenModel, ContextId, TokenId, Vocabulary};
pub use remote::{serve_line_protocol, LineProtocolModel, LogProbRequest, LogProbResponse, SubprocessModel};
pub use search::{
    beam_search, nucleus, nucleus_sample, nucleus_sample_with_rng, sequence_log_likelihood, DecodeConfig, Hypothesis,
};

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("token {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("distribution sums to {sum} after exponentiation")]
    InvalidDistribution { sum: f64 },
    #[error("distribution has {got} entries, vocabulary has {expected}")]
    WrongWidth { expected: usize, got: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model backend: {0}")]
    Backend(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
