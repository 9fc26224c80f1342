use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{DebiasError, ProbeConfig};
use crate::corpus::{Corpus, Label};
use crate::textclf::{featurize, predict, tokenize, train_examples, Hyper, SparseVector, TextClassifierModel};

pub const AUDIT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditResult {
    pub accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
}

/// Seeded per-label split; `round(fraction * n)` of each label goes to the
/// test side. Returns (train, test) index lists in corpus order.
pub fn stratified_split(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DebiasError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; corpus.len()];
    for label in [Label::Positive, Label::Negative] {
        let mut members: Vec<usize> =
            corpus.records.iter().enumerate().filter(|(_, r)| r.label == label).map(|(i, _)| i).collect();
        let n_test = (fraction * members.len() as f64).round() as usize;
        if n_test == 0 {
            return Err(DebiasError::DegenerateSplit { label, split: "test" });
        }
        if n_test == members.len() {
            return Err(DebiasError::DegenerateSplit { label, split: "train" });
        }
        members.shuffle(&mut rng);
        for &i in &members[..n_test] {
            in_test[i] = true;
        }
    }
    Ok((0..corpus.len()).partition(|&i| !in_test[i]))
}

/// Held-out accuracy of a fresh text-only probe on a stratified 80/20
/// split. Values near 0.5 mean captions alone do not reveal the label.
pub fn audit_bias(corpus: &Corpus, seed: u64, probe: &ProbeConfig) -> Result<AuditResult, DebiasError> {
    let (train_idx, test_idx) = stratified_split(corpus, AUDIT_TEST_FRACTION, seed)?;
    let examples: Vec<(SparseVector<f64>, bool)> = train_idx
        .iter()
        .map(|&i| {
            let r = &corpus.records[i];
            (featurize(&tokenize(&r.text), &probe.featurizer), r.label.is_negative())
        })
        .collect();
    let hyper = Hyper { seed, ..probe.hyper.clone() };
    let model: TextClassifierModel<f64> = train_examples(&examples, &probe.featurizer, &hyper)?;
    let correct = test_idx.iter().filter(|&&i| predict(&model, &corpus.records[i]).correct).count();
    Ok(AuditResult {
        accuracy: correct as f64 / test_idx.len() as f64,
        train_size: train_idx.len(),
        test_size: test_idx.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debias::partition::tests::corpus;

    #[test]
    fn split_is_stratified_and_seeded() {
        let c = corpus(50, 30);
        let (train, test) = stratified_split(&c, 0.2, 4).unwrap();
        assert_eq!(test.len(), 16);
        assert_eq!(train.len(), 64);
        let neg_test = test.iter().filter(|&&i| c.records[i].label == Label::Negative).count();
        assert_eq!(neg_test, 6);
        assert_eq!((train.clone(), test.clone()), stratified_split(&c, 0.2, 4).unwrap());
    }

    #[test]
    fn degenerate_split_is_an_error() {
        let c = corpus(50, 2);
        assert!(matches!(
            audit_bias(&c, 0, &ProbeConfig::default()),
            Err(DebiasError::DegenerateSplit { label: Label::Negative, split: "test" })
        ));
    }
}
