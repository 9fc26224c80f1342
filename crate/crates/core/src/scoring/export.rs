use std::path::Path;

use serde::Serialize;

use super::{write_jsonl, ScoringError};
use crate::corpus::{Corpus, Label};

/// Prompt used both for scoring and for Yes/No fine-tuning targets.
pub fn match_prompt(caption: &str) -> String {
    format!("Does this image match the following caption {caption}. Answer Yes or No directly.")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrainExample {
    pub image_ref: String,
    pub prompt: String,
    pub target: &'static str,
}

impl TrainExample {
    pub fn from_record(rec: &crate::corpus::CaptionRecord) -> Self {
        TrainExample {
            image_ref: rec.image_ref.clone(),
            prompt: match_prompt(&rec.text),
            target: match rec.label {
                Label::Positive => "Yes",
                Label::Negative => "No",
            },
        }
    }
}

/// Writes one Yes/No training line per record, in corpus order.
pub fn export_train(corpus: &Corpus, path: impl AsRef<Path>) -> Result<usize, ScoringError> {
    let examples: Vec<TrainExample> = corpus.records.iter().map(TrainExample::from_record).collect();
    write_jsonl(&examples, path)?;
    Ok(examples.len())
}
