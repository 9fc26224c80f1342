use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{make_partitions, DebiasError, PartitionPlan, ProbeConfig, DEFAULT_FOLDS, DEFAULT_K_PERCENT};
use crate::corpus::{Corpus, Label, NegType};
use crate::neggen::derive_seed;
use crate::textclf::{featurize, tokenize, train_examples, Hyper, Prediction, SparseVector, TextClassifierModel};

/// Externally computed probe outputs, keyed by record id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionOverride {
    p_negative: HashMap<String, f64>,
}

#[derive(Deserialize)]
struct OverrideLine {
    record_id: String,
    p_negative: f64,
}

impl PredictionOverride {
    pub fn new(p_negative: HashMap<String, f64>) -> Self {
        PredictionOverride { p_negative }
    }

    /// Reads JSONL lines `{"record_id": str, "p_negative": float}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DebiasError> {
        let path = path.as_ref();
        let io = |source| DebiasError::Io { path: path.to_path_buf(), source };
        let mut map = HashMap::new();
        for (i, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| DebiasError::InvalidOverride { line: i + 1, message };
            let rec: OverrideLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if !(0.0..=1.0).contains(&rec.p_negative) {
                return Err(bad(format!("p_negative {} outside [0, 1]", rec.p_negative)));
            }
            if map.insert(rec.record_id.clone(), rec.p_negative).is_some() {
                return Err(bad(format!("duplicate record_id `{}`", rec.record_id)));
            }
        }
        Ok(PredictionOverride { p_negative: map })
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.p_negative.get(id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Removal {
    pub record_id: String,
    pub predicted_label: Label,
    pub confidence: f64,
    /// 1-based position within its predicted-label group.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<NegType>,
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub probe_accuracy: f64,
    pub removed: Vec<Removal>,
}

/// `floor(k% of n)`, computed as `k * n / 100` so integral `k` is exact.
pub fn removal_count(k_percent: f64, n: usize) -> usize {
    ((k_percent * n as f64) / 100.0).floor() as usize
}

/// Picks the most confident `k%` of correct predictions within each
/// predicted label. Confidence ties go to the smaller record id.
pub fn select_removals(predictions: &[Prediction], k_percent: f64) -> Vec<Removal> {
    let mut removed = Vec::new();
    for label in [Label::Positive, Label::Negative] {
        let mut group: Vec<&Prediction> = predictions.iter().filter(|p| p.correct && p.predicted == label).collect();
        group.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.record_id.cmp(&b.record_id)));
        let take = removal_count(k_percent, group.len());
        removed.extend(group.into_iter().take(take).enumerate().map(|(i, p)| Removal {
            record_id: p.record_id.clone(),
            predicted_label: p.predicted,
            confidence: p.confidence,
            rank: i + 1,
        }));
    }
    removed
}

fn check_k(k_percent: f64) -> Result<(), DebiasError> {
    if (0.0..=100.0).contains(&k_percent) {
        Ok(())
    } else {
        Err(DebiasError::InvalidK(k_percent))
    }
}

/// Runs one held-out partition: probe on the other folds (or the override),
/// predict the held-out fold, select removals.
pub fn filter_fold(
    corpus: &Corpus,
    plan: &PartitionPlan,
    fold: usize,
    k_percent: f64,
    probe: &ProbeConfig,
    predictions_override: Option<&PredictionOverride>,
) -> Result<FoldReport, DebiasError> {
    if fold >= plan.n_folds {
        return Err(DebiasError::FoldOutOfRange { fold, n_folds: plan.n_folds });
    }
    check_k(k_percent)?;
    let (train_idx, test_idx) = plan.split_indices(corpus, fold)?;

    let predictions: Vec<Prediction> = match predictions_override {
        Some(table) => test_idx
            .iter()
            .map(|&i| {
                let r = &corpus.records[i];
                table
                    .get(&r.id)
                    .map(|p| Prediction::from_probability(r.id.clone(), p, r.label))
                    .ok_or_else(|| DebiasError::MissingOverride(r.id.clone()))
            })
            .collect::<Result<_, _>>()?,
        None => {
            let featurize_at =
                |i: usize| -> SparseVector<f64> { featurize(&tokenize(&corpus.records[i].text), &probe.featurizer) };
            let examples: Vec<(SparseVector<f64>, bool)> =
                train_idx.iter().map(|&i| (featurize_at(i), corpus.records[i].label.is_negative())).collect();
            let hyper = Hyper { seed: derive_seed(probe.hyper.seed ^ plan.seed, fold as u64), ..probe.hyper.clone() };
            let model: TextClassifierModel<f64> = train_examples(&examples, &probe.featurizer, &hyper)?;
            test_idx
                .iter()
                .map(|&i| {
                    let r = &corpus.records[i];
                    Prediction::from_probability(r.id.clone(), model.p_negative(&featurize_at(i)), r.label)
                })
                .collect()
        }
    };

    let correct = predictions.iter().filter(|p| p.correct).count();
    Ok(FoldReport {
        group: None,
        fold,
        train_size: train_idx.len(),
        test_size: test_idx.len(),
        probe_accuracy: if predictions.is_empty() { 0.0 } else { correct as f64 / predictions.len() as f64 },
        removed: select_removals(&predictions, k_percent),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// One filter over the whole corpus.
    #[default]
    Joint,
    /// One filter per negative type, each with its associated positives.
    Separate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOptions {
    pub n_folds: usize,
    pub k_percent: f64,
    pub seed: u64,
    pub probe: ProbeConfig,
    pub mode: FilterMode,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            n_folds: DEFAULT_FOLDS,
            k_percent: DEFAULT_K_PERCENT,
            seed: 0,
            probe: ProbeConfig::default(),
            mode: FilterMode::Joint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterReport {
    pub k_percent: f64,
    pub n_folds: usize,
    pub seed: u64,
    pub mode: FilterMode,
    pub per_fold: Vec<FoldReport>,
    pub retained_count: usize,
    pub removed_count: usize,
    pub provenance: BTreeMap<String, String>,
}

fn run_folds(
    corpus: &Corpus,
    opts: &FilterOptions,
    predictions_override: Option<&PredictionOverride>,
    group: Option<NegType>,
) -> Result<Vec<FoldReport>, DebiasError> {
    let plan = make_partitions(corpus, opts.n_folds, opts.seed)?;
    (0..plan.n_folds)
        .into_par_iter()
        .map(|fold| {
            filter_fold(corpus, &plan, fold, opts.k_percent, &opts.probe, predictions_override)
                .map(|r| FoldReport { group, ..r })
        })
        .collect()
}

/// Splits the corpus into one sub-corpus per negative type. A positive goes
/// with the first negative derived from it; unreferenced positives are dealt
/// round-robin over the types present.
fn split_by_type(corpus: &Corpus) -> Vec<(NegType, Corpus)> {
    let types: Vec<NegType> =
        NegType::ALL.into_iter().filter(|t| corpus.records.iter().any(|r| r.neg_type == Some(*t))).collect();
    let mut owner: HashMap<&str, NegType> = HashMap::new();
    for r in &corpus.records {
        if let (Some(t), Some(src)) = (r.neg_type, r.source_id.as_deref()) {
            owner.entry(src).or_insert(t);
        }
    }
    let mut next = 0;
    let mut assigned: Vec<NegType> = Vec::with_capacity(corpus.len());
    for r in &corpus.records {
        let t = match (r.neg_type, owner.get(r.id.as_str())) {
            (Some(t), _) => t,
            (None, Some(&t)) => t,
            (None, None) => {
                let t = types[next % types.len()];
                next += 1;
                t
            }
        };
        assigned.push(t);
    }
    types.into_iter().map(|t| (t, corpus.retain_indices(|i| assigned[i] == t))).collect()
}

/// Runs [`filter_fold`] for every fold and drops the union of removals.
pub fn debias_filter(
    corpus: &Corpus,
    opts: &FilterOptions,
    predictions_override: Option<&PredictionOverride>,
) -> Result<(Corpus, FilterReport), DebiasError> {
    check_k(opts.k_percent)?;
    corpus.require_both_labels()?;

    let per_fold = match opts.mode {
        FilterMode::Separate if corpus.records.iter().any(|r| r.neg_type.is_some()) => {
            let mut all = Vec::new();
            for (t, sub) in split_by_type(corpus) {
                all.extend(run_folds(&sub, opts, predictions_override, Some(t))?);
            }
            all
        }
        _ => run_folds(corpus, opts, predictions_override, None)?,
    };

    let removed: HashSet<&str> = per_fold.iter().flat_map(|f| f.removed.iter().map(|r| r.record_id.as_str())).collect();
    let mut retained = corpus.retain_indices(|i| !removed.contains(corpus.records[i].id.as_str()));
    retained.provenance.insert("filter_k_percent".into(), opts.k_percent.to_string());
    retained.provenance.insert("filter_folds".into(), opts.n_folds.to_string());
    retained.provenance.insert("filter_seed".into(), opts.seed.to_string());

    let mut provenance = corpus.provenance.clone();
    provenance.insert(
        "probe".into(),
        if predictions_override.is_some() { "override".into() } else { "hashed-ngram-logistic".into() },
    );
    let report = FilterReport {
        k_percent: opts.k_percent,
        n_folds: opts.n_folds,
        seed: opts.seed,
        mode: opts.mode,
        retained_count: retained.len(),
        removed_count: removed.len(),
        per_fold,
        provenance,
    };
    Ok((retained, report))
}
