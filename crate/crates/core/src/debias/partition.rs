use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::DebiasError;
use crate::corpus::{Corpus, Label};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionPlan {
    pub n_folds: usize,
    pub assignment: BTreeMap<String, usize>,
    pub seed: u64,
}

impl PartitionPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    /// Corpus indices outside and inside `fold`.
    pub fn split_indices(&self, corpus: &Corpus, fold: usize) -> Result<(Vec<usize>, Vec<usize>), DebiasError> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, r) in corpus.records.iter().enumerate() {
            match self.fold_of(&r.id) {
                Some(f) if f == fold => test.push(i),
                Some(_) => train.push(i),
                None => return Err(DebiasError::Unassigned(r.id.clone())),
            }
        }
        Ok((train, test))
    }
}

/// Seeded stratified assignment: within each label, a shuffled order is
/// dealt round-robin over the folds. Negatives start where positives left
/// off so total fold sizes also stay within one of each other.
pub fn make_partitions(corpus: &Corpus, n_folds: usize, seed: u64) -> Result<PartitionPlan, DebiasError> {
    if n_folds < 2 {
        return Err(DebiasError::TooFewFolds(n_folds));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut offset = 0;
    for label in [Label::Positive, Label::Negative] {
        let mut members: Vec<&str> =
            corpus.records.iter().filter(|r| r.label == label).map(|r| r.id.as_str()).collect();
        if members.len() < n_folds {
            return Err(DebiasError::TooFewRecords { label, count: members.len(), n_folds });
        }
        members.shuffle(&mut rng);
        for (pos, id) in members.iter().enumerate() {
            assignment.insert(id.to_string(), (offset + pos) % n_folds);
        }
        offset = (offset + members.len()) % n_folds;
    }
    Ok(PartitionPlan { n_folds, assignment, seed })
}
