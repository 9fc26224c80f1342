//! Removal of text-only distributional bias.
//!
//! The corpus is split into N stratified partitions. For each partition a
//! text-only probe is trained on the other N-1, predictions are made on the
//! held-out partition, and among the correct predictions the most confident
//! `k%` of each predicted class are dropped. [`audit_bias`] measures what a
//! fresh probe can still learn from the result.

mod audit;
mod filter;
mod partition;

use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::{CorpusError, Label};
use crate::textclf::{ClassifierError, FeaturizerConfig, Hyper};

pub use audit::{audit_bias, stratified_split, AuditResult, AUDIT_TEST_FRACTION};
pub use filter::{
    debias_filter, filter_fold, removal_count, select_removals, FilterMode, FilterOptions, FilterReport, FoldReport,
    PredictionOverride, Removal,
};
pub use partition::{make_partitions, PartitionPlan};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_K_PERCENT: f64 = 30.0;
/// Audit accuracy (percent) above which the CLI warns.
pub const DEFAULT_AUDIT_THRESHOLD: f64 = 60.0;

/// Featurizer and training settings for the text-only probe.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize)]
pub struct ProbeConfig {
    pub featurizer: FeaturizerConfig,
    pub hyper: Hyper,
}

#[derive(Debug, Error)]
pub enum DebiasError {
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{count} {label} records cannot fill {n_folds} folds")]
    TooFewRecords { label: Label, count: usize, n_folds: usize },
    #[error("fold {fold} out of range for {n_folds} folds")]
    FoldOutOfRange { fold: usize, n_folds: usize },
    #[error("k must be within [0, 100], got {0}")]
    InvalidK(f64),
    #[error("record `{0}` is not assigned to any fold")]
    Unassigned(String),
    #[error("prediction override has no entry for record `{0}`")]
    MissingOverride(String),
    #[error("prediction override line {line}: {message}")]
    InvalidOverride { line: usize, message: String },
    #[error("audit split leaves no {label} records in the {split} set")]
    DegenerateSplit { label: Label, split: &'static str },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}
