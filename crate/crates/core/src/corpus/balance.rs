use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, CorpusError, Label, NegType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BalanceMode {
    /// Subsample the majority label down to the minority count.
    #[default]
    Global,
    /// Equalize the negative types first, then balance labels globally.
    PerNegType,
}

/// Seeded majority-label subsampling so that positives and negatives differ
/// by at most one. Retained records keep their relative order.
pub fn balance(corpus: &Corpus, seed: u64) -> Result<Corpus, CorpusError> {
    balance_with(corpus, seed, BalanceMode::Global)
}

pub fn balance_with(corpus: &Corpus, seed: u64, mode: BalanceMode) -> Result<Corpus, CorpusError> {
    corpus.require_both_labels()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![true; corpus.len()];

    if mode == BalanceMode::PerNegType {
        let mut by_type: BTreeMap<NegType, Vec<usize>> = BTreeMap::new();
        for (i, r) in corpus.records.iter().enumerate() {
            if let Some(t) = r.neg_type {
                by_type.entry(t).or_default().push(i);
            }
        }
        if by_type.len() > 1 {
            let target = by_type.values().map(Vec::len).min().unwrap_or(0);
            for members in by_type.values() {
                subsample(members, target, &mut rng, &mut keep);
            }
        }
    }

    let indices_of = |label: Label, keep: &[bool]| -> Vec<usize> {
        corpus.records.iter().enumerate().filter(|(i, r)| keep[*i] && r.label == label).map(|(i, _)| i).collect()
    };
    let pos = indices_of(Label::Positive, &keep);
    let neg = indices_of(Label::Negative, &keep);
    if pos.len().abs_diff(neg.len()) > 1 {
        let (major, minor) = if pos.len() > neg.len() { (&pos, &neg) } else { (&neg, &pos) };
        subsample(major, minor.len(), &mut rng, &mut keep);
    }

    let mut out = corpus.retain_indices(|i| keep[i]);
    out.provenance.insert("balance_seed".into(), seed.to_string());
    Ok(out)
}

/// Marks all but a seeded uniform `target`-subset of `members` as dropped.
fn subsample(members: &[usize], target: usize, rng: &mut ChaCha8Rng, keep: &mut [bool]) {
    if members.len() <= target {
        return;
    }
    let chosen = index::sample(rng, members.len(), target);
    let mut selected = vec![false; members.len()];
    for j in chosen.iter() {
        selected[j] = true;
    }
    for (j, &i) in members.iter().enumerate() {
        if !selected[j] {
            keep[i] = false;
        }
    }
}
