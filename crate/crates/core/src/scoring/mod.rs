//! Yes/No logits to alignment scores, logits ingestion and training export.

mod endpoint;
mod export;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{logistic, Scalar};
use crate::transport::TransportError;

pub use endpoint::{fetch_logits, score_request, ScoreRequest, ScoringSettings};
pub use export::{export_train, match_prompt, TrainExample};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("non-finite logit for `{pair_id}`")]
    NonFinite { pair_id: String },
    #[error("duplicate pair_id `{0}`")]
    DuplicatePair(String),
    #[error("response for `{pair_id}`: {message}")]
    BadResponse { pair_id: String, message: String },
    #[error("scoring request for `{pair_id}` failed: {source}")]
    Transport { pair_id: String, source: TransportError },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl ScoringError {
    pub fn is_transport(&self) -> bool {
        matches!(self, ScoringError::Transport { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitPair<T = f64> {
    pub pair_id: String,
    pub yes_logit: T,
    pub no_logit: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair<T = f64> {
    pub pair_id: String,
    pub score: T,
}

/// Two-way softmax of the Yes/No logits: `e^yes / (e^yes + e^no)`,
/// evaluated as `1 / (1 + e^(no - yes))` without overflow.
pub fn alignment_score<T: Scalar>(yes_logit: T, no_logit: T) -> Option<T> {
    (yes_logit.is_finite() && no_logit.is_finite()).then(|| logistic(yes_logit - no_logit))
}

pub fn score_pairs<T: Scalar>(logits: &[LogitPair<T>]) -> Result<Vec<ScoredPair<T>>, ScoringError> {
    let mut seen = HashSet::with_capacity(logits.len());
    logits
        .iter()
        .map(|lp| {
            if !seen.insert(lp.pair_id.as_str()) {
                return Err(ScoringError::DuplicatePair(lp.pair_id.clone()));
            }
            let score = alignment_score(lp.yes_logit, lp.no_logit)
                .ok_or_else(|| ScoringError::NonFinite { pair_id: lp.pair_id.clone() })?;
            Ok(ScoredPair { pair_id: lp.pair_id.clone(), score })
        })
        .collect()
}

/// Reads a logits JSONL file `{"pair_id", "yes_logit", "no_logit"}`.
pub fn load_logits(path: impl AsRef<Path>) -> Result<Vec<LogitPair>, ScoringError> {
    let path = path.as_ref();
    let io = |source| ScoringError::Io { path: path.to_path_buf(), source };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let lp: LogitPair =
            serde_json::from_str(&line).map_err(|e| ScoringError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(lp);
    }
    Ok(out)
}

pub fn write_jsonl<S: Serialize>(items: &[S], path: impl AsRef<Path>) -> Result<(), ScoringError> {
    let path = path.as_ref();
    let io = |source| ScoringError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}
