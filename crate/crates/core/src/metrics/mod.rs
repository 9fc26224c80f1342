//! Evaluation metrics for alignment scorers.

mod auc;
mod group;
mod rank;
mod threshold;

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

pub use auc::roc_auc;
pub use group::{
    magicbrush_group, pair_image_score, winoground_scores, MagicBrushOutcome, QuadScores, WinogroundOutcome,
};
pub use rank::{average_ranks, grouped_correlation, kendall, spearman, Aggregation, Correlation};
pub use threshold::{oracle_threshold_accuracy, oracle_threshold_balanced_accuracy, ThresholdFit};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{what} needs at least one {class} sample")]
    MissingClass { what: &'static str, class: &'static str },
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("{0} has zero rank variance")]
    Degenerate(&'static str),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

pub(crate) fn check_finite<T: num_traits::Float>(xs: &[T]) -> Result<(), MetricError> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(MetricError::NonFinite(i)),
        None => Ok(()),
    }
}

/// A named metric value with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub n: usize,
    pub config: BTreeMap<String, Value>,
}

impl MetricReport {
    pub fn new(name: impl Into<String>, value: f64, n: usize) -> Self {
        MetricReport { name: name.into(), value, n, config: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.config.insert(key.to_string(), value.into());
        self
    }
}
