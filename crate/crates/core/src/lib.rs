//! Curation and evaluation toolkit for image-text alignment data.
//!
//! The crate covers the full batch flow: hard-negative caption generation
//! ([`neggen`]), corpus hygiene and balancing ([`corpus`]), removal of
//! text-only distributional bias with a cross-partition probe ([`debias`],
//! built on [`textclf`]), conversion of Yes/No logits into alignment scores
//! ([`scoring`]) and the evaluation metrics used to compare scorers
//! ([`metrics`]).
//!
//! Numeric code is generic over [`num_traits::Float`]; the aliases below fix
//! the scalar to `f64`, which is what the CLI and file formats use.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod debias;
pub mod error;
pub mod metrics;
pub mod neggen;
pub mod scalar;
pub mod scoring;
pub mod synth;
pub mod textclf;
pub mod transport;

pub use corpus::{CaptionRecord, Corpus, Label, NegType};
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used by every file format and the command line.
pub type Real = f64;

pub type TextClassifierModel = textclf::TextClassifierModel<Real>;
pub type Prediction = textclf::Prediction<Real>;
pub type SparseVector = textclf::SparseVector<Real>;
pub type LogitPair = scoring::LogitPair<Real>;
pub type ScoredPair = scoring::ScoredPair<Real>;
pub type QuadScores = metrics::QuadScores<Real>;
