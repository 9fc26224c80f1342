use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::ClassifierError;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub ngram_orders: BTreeSet<usize>,
    pub hash_dim: usize,
    pub hash_seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig { ngram_orders: BTreeSet::from([1, 2]), hash_dim: 1 << 18, hash_seed: 0 }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.hash_dim < 2 || !self.hash_dim.is_power_of_two() {
            return Err(ClassifierError::InvalidConfig(format!(
                "hash_dim must be a power of two >= 2, got {}",
                self.hash_dim
            )));
        }
        if self.hash_dim > 1 << 32 {
            return Err(ClassifierError::InvalidConfig("hash_dim exceeds 2^32".into()));
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return Err(ClassifierError::InvalidConfig("ngram orders must be nonempty and >= 1".into()));
        }
        Ok(())
    }
}

/// Sparse count vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector<T> {
    pub indices: Vec<u32>,
    pub values: Vec<T>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[T]) -> T {
        self.iter().fold(T::zero(), |acc, (i, v)| acc + dense[i] * v)
    }

    /// Builds from unsorted (index, value) pairs, summing duplicates.
    pub fn from_pairs(mut pairs: Vec<(u32, T)>) -> Self {
        pairs.sort_unstable_by_key(|p| p.0);
        let mut out =
            SparseVector { indices: Vec::with_capacity(pairs.len()), values: Vec::with_capacity(pairs.len()) };
        for (i, v) in pairs {
            match out.indices.last() {
                Some(&last) if last == i => *out.values.last_mut().unwrap() = *out.values.last().unwrap() + v,
                _ => {
                    out.indices.push(i);
                    out.values.push(v);
                }
            }
        }
        out
    }
}

fn hash_ngram(gram: &[String], seed: u64, mask: u64) -> u32 {
    let mut buf = Vec::with_capacity(gram.iter().map(|t| t.len() + 1).sum::<usize>() + 1);
    buf.push(gram.len() as u8);
    for tok in gram {
        buf.extend_from_slice(tok.as_bytes());
        buf.push(0x1f);
    }
    (xxh3_64_with_seed(&buf, seed) & mask) as u32
}

/// Hashes every contiguous n-gram (for each configured order) into
/// `[0, hash_dim)`; values are occurrence counts.
pub fn featurize<T: Scalar>(tokens: &[String], config: &FeaturizerConfig) -> SparseVector<T> {
    let mask = (config.hash_dim - 1) as u64;
    let mut pairs = Vec::new();
    for &n in &config.ngram_orders {
        if n == 0 || tokens.len() < n {
            continue;
        }
        for gram in tokens.windows(n) {
            pairs.push((hash_ngram(gram, config.hash_seed, mask), T::one()));
        }
    }
    SparseVector::from_pairs(pairs)
}
