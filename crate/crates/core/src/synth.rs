//! Synthetic caption corpora with a known amount of text-only label signal,
//! for calibrating the debias filter and the audit probe.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CaptionRecord, Corpus, NegType};

const ADJECTIVES: &[&str] =
    &["small", "large", "old", "young", "wooden", "shiny", "striped", "dusty", "wet", "bright", "quiet", "busy"];
const SUBJECTS: &[&str] = &[
    "dog", "cat", "man", "woman", "child", "horse", "bird", "bus", "truck", "boat", "kite", "bicycle", "cow", "sheep",
    "train", "skier", "surfer", "elephant", "giraffe", "zebra",
];
const VERBS: &[&str] =
    &["standing", "sitting", "waiting", "resting", "moving", "parked", "playing", "walking", "lying", "looking"];
const PREPOSITIONS: &[&str] = &["near", "beside", "behind", "under", "on", "in"];
const PLACES: &[&str] = &[
    "beach", "street", "field", "kitchen", "park", "river", "road", "station", "table", "fence", "snow", "grass",
    "window", "bridge", "market",
];

/// Parameters of a planted-bias corpus. Both labels draw captions from the
/// same generator; only `marker` (appended to a fixed fraction of the
/// negatives) carries label information.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBias {
    pub n_per_label: usize,
    pub marker: String,
    pub marker_fraction: f64,
    pub seed: u64,
}

impl Default for PlantedBias {
    fn default() -> Self {
        PlantedBias { n_per_label: 1000, marker: "zq".into(), marker_fraction: 0.4, seed: 0 }
    }
}

impl PlantedBias {
    /// Number of negatives that carry the marker.
    pub fn marked_count(&self) -> usize {
        (self.marker_fraction * self.n_per_label as f64).round() as usize
    }

    /// Best text-only accuracy: predict negative iff the marker is present.
    pub fn bayes_accuracy(&self) -> f64 {
        (self.n_per_label + self.marked_count()) as f64 / (2 * self.n_per_label) as f64
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.gen_range(0..words.len())]
}

pub fn random_caption(rng: &mut ChaCha8Rng) -> String {
    format!(
        "a {} {} {} {} the {}",
        pick(rng, ADJECTIVES),
        pick(rng, SUBJECTS),
        pick(rng, VERBS),
        pick(rng, PREPOSITIONS),
        pick(rng, PLACES)
    )
}

/// Balanced corpus: positives `p{i}` and negatives `n{i}` (derived from
/// `p{i}`), interleaved.
pub fn planted_bias_corpus(spec: &PlantedBias) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_per_label;
    let mut marked = vec![false; n];
    for i in index::sample(&mut rng, n, spec.marked_count().min(n)).iter() {
        marked[i] = true;
    }
    let mut records = Vec::with_capacity(2 * n);
    for (i, &is_marked) in marked.iter().enumerate() {
        let pos_id = format!("p{i}");
        let image = format!("img_{i}");
        records.push(CaptionRecord::positive(pos_id.clone(), image.clone(), random_caption(&mut rng)));
        let mut text = random_caption(&mut rng);
        if is_marked {
            text.push(' ');
            text.push_str(&spec.marker);
        }
        let kind = if i % 2 == 0 { NegType::Replace } else { NegType::Swap };
        records.push(CaptionRecord::negative(format!("n{i}"), image, text, kind, pos_id));
    }
    let mut corpus = Corpus::from_records(records).expect("generated records are valid");
    corpus.provenance.insert("generator".into(), "planted-bias".into());
    corpus.provenance.insert("marker_fraction".into(), spec.marker_fraction.to_string());
    corpus
}
