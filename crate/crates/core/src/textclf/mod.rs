//! Text-only binary classifier: tokenizer, hashed n-gram featurizer and an
//! L2-regularized logistic model trained by SGD.

mod features;
mod model;
mod tokenize;

use thiserror::Error;

use crate::corpus::Label;

pub use features::{featurize, FeaturizerConfig, SparseVector};
pub use model::{
    example_gradient, example_loss, load_model, predict, predict_text, save_model, train, train_examples,
    ExampleGradient, Hyper, LrSchedule, Prediction, TextClassifierModel, MODEL_FORMAT,
};
pub use tokenize::tokenize;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid featurizer config: {0}")]
    InvalidConfig(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("training data has no {0} examples")]
    SingleLabel(Label),
    #[error("training diverged: non-finite weights")]
    NonFinite,
    #[error("model file: {0}")]
    Format(String),
    #[error("{}: {source}", path.display())]
    Io { path: std::path::PathBuf, source: std::io::Error },
}
