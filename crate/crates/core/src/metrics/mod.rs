//! Automated report-quality metrics.
//!
//! NLG metrics ([`bleu`], [`rouge`], [`cider`]) work on [`TokenSequence`]s;
//! clinical metrics ([`clinical`]) on [`LabelVector`](crate::labeler::LabelVector)s.
//! [`rank`], [`roc`] and [`graph`] cover agreement with expert labels, and
//! [`bootstrap`] attaches percentile confidence intervals to any of them.

pub mod bleu;
pub mod bootstrap;
pub mod cider;
pub mod clinical;
pub mod graph;
pub mod rank;
pub mod report;
pub mod roc;
pub mod rouge;
pub mod tokenize;

pub use bleu::{bleu4, sentence_bleu4, BleuSmoothing};
pub use bootstrap::{bootstrap_ci, bootstrap_indices, ConfidenceInterval, Statistic};
pub use cider::cider_d;
pub use clinical::{majority_and_soft, micro_f1, ConsensusLabel, F1Score, UncertainPolicy};
pub use graph::{graph_f1, AnnotationGraph, GraphF1};
pub use rank::kendall_tau_b;
pub use report::{MetricEntry, MetricReport};
pub use roc::{roc, roc_micro, RocCurve};
pub use rouge::{lcs_length, rouge_l, rouge_l_corpus, ROUGE_L_BETA};
pub use tokenize::{tokenize, TokenSequence};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("non-finite score")]
    NonFinite,
    #[error("targets contain a single class")]
    SingleClass,
    #[error("malformed graph {report_id}: {message}")]
    MalformedGraph { report_id: String, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub(crate) fn check_lengths(left: usize, right: usize) -> Result<(), MetricError> {
    if left != right {
        return Err(MetricError::LengthMismatch { left, right });
    }
    Ok(())
}
