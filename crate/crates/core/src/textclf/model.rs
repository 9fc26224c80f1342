use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{featurize, tokenize, ClassifierError, FeaturizerConfig, SparseVector};
use crate::corpus::{CaptionRecord, Corpus, Label};
use crate::scalar::{logistic, Scalar};

pub const MODEL_FORMAT: &str = "align-curate/textclf-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// `lr / sqrt(t)` with `t` the 1-based update count.
    #[default]
    InvSqrt,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    #[serde(default)]
    pub schedule: LrSchedule,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { learning_rate: 0.1, epochs: 3, l2: 1e-6, seed: 0, schedule: LrSchedule::InvSqrt }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidHyper(m.into()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if self.learning_rate * self.l2 >= 1.0 {
            return bad("learning_rate * l2 must be below 1");
        }
        Ok(())
    }

    fn step_size(&self, t: usize) -> f64 {
        match self.schedule {
            LrSchedule::InvSqrt => self.learning_rate / (t as f64).sqrt(),
            LrSchedule::Constant => self.learning_rate,
        }
    }
}

/// Logistic model over hashed n-gram counts. The positive class of the
/// logistic is the `negative` caption label.
#[derive(Debug, Clone, PartialEq)]
pub struct TextClassifierModel<T> {
    pub config: FeaturizerConfig,
    pub weights: Vec<T>,
    pub bias: T,
    pub hyper: Hyper,
}

impl<T: Scalar> TextClassifierModel<T> {
    pub fn zeros(config: FeaturizerConfig, hyper: Hyper) -> Self {
        let weights = vec![T::zero(); config.hash_dim];
        TextClassifierModel { config, weights, bias: T::zero(), hyper }
    }

    pub fn features(&self, text: &str) -> SparseVector<T> {
        featurize(&tokenize(text), &self.config)
    }

    pub fn margin(&self, x: &SparseVector<T>) -> T {
        x.dot(&self.weights) + self.bias
    }

    pub fn p_negative(&self, x: &SparseVector<T>) -> T {
        logistic(self.margin(x))
    }

    /// Mean regularized loss over labelled examples (`true` = negative).
    pub fn objective(&self, examples: &[(SparseVector<T>, bool)]) -> T {
        if examples.is_empty() {
            return T::zero();
        }
        let data = examples.iter().fold(T::zero(), |acc, (x, y)| acc + logloss(self.margin(x), *y));
        let sq = self.weights.iter().fold(T::zero(), |acc, &w| acc + w * w);
        data / T::lit(examples.len() as f64) + T::lit(0.5 * self.hyper.l2) * sq
    }

    fn check_invariants(&self) -> Result<(), ClassifierError> {
        if self.weights.len() != self.config.hash_dim {
            return Err(ClassifierError::Format(format!(
                "weights length {} != hash_dim {}",
                self.weights.len(),
                self.config.hash_dim
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(ClassifierError::NonFinite);
        }
        Ok(())
    }
}

fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Logistic loss of margin `z` for target `negative` (1) or positive (0).
fn logloss<T: Scalar>(z: T, negative: bool) -> T {
    if negative {
        softplus(-z)
    } else {
        softplus(z)
    }
}

/// Per-example objective `logloss(w.x + b) + (l2/2)|w|^2`.
pub fn example_loss<T: Scalar>(weights: &[T], bias: T, x: &SparseVector<T>, negative: bool, l2: T) -> T {
    let sq = weights.iter().fold(T::zero(), |acc, &w| acc + w * w);
    logloss(x.dot(weights) + bias, negative) + l2 / T::lit(2.0) * sq
}

/// Gradient of [`example_loss`]: `residual * x + l2 * w` for the weights,
/// `residual` for the bias.
#[derive(Debug, Clone)]
pub struct ExampleGradient<T> {
    pub residual: T,
    pub l2: T,
}

impl<T: Scalar> ExampleGradient<T> {
    pub fn weight(&self, weights: &[T], x: &SparseVector<T>, j: usize) -> T {
        let xj = x.iter().find(|&(i, _)| i == j).map_or(T::zero(), |(_, v)| v);
        self.residual * xj + self.l2 * weights[j]
    }

    pub fn bias(&self) -> T {
        self.residual
    }
}

pub fn example_gradient<T: Scalar>(
    weights: &[T],
    bias: T,
    x: &SparseVector<T>,
    negative: bool,
    l2: T,
) -> ExampleGradient<T> {
    let p = logistic(x.dot(weights) + bias);
    let target = if negative { T::one() } else { T::zero() };
    ExampleGradient { residual: p - target, l2 }
}

/// SGD on pre-featurized examples (`true` = negative label).
///
/// Weights are kept as `scale * v` so the L2 shrink is O(1) per step; the
/// result is identical to the dense update up to rounding.
pub fn train_examples<T: Scalar>(
    examples: &[(SparseVector<T>, bool)],
    config: &FeaturizerConfig,
    hyper: &Hyper,
) -> Result<TextClassifierModel<T>, ClassifierError> {
    config.validate()?;
    hyper.validate()?;
    if !examples.iter().any(|e| e.1) {
        return Err(ClassifierError::SingleLabel(Label::Negative));
    }
    if !examples.iter().any(|e| !e.1) {
        return Err(ClassifierError::SingleLabel(Label::Positive));
    }

    let mut v = vec![T::zero(); config.hash_dim];
    let mut scale = T::one();
    let mut bias = T::zero();
    let l2 = T::lit(hyper.l2);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut t = 0usize;

    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let (x, negative) = &examples[i];
            let eta = T::lit(hyper.step_size(t));
            let z = scale * x.dot(&v) + bias;
            let target = if *negative { T::one() } else { T::zero() };
            let residual = logistic(z) - target;

            scale = scale * (T::one() - eta * l2);
            let step = eta * residual / scale;
            for (j, xj) in x.iter() {
                v[j] = v[j] - step * xj;
            }
            bias = bias - eta * residual;

            if scale < T::lit(1e-9) {
                v.iter_mut().for_each(|w| *w = *w * scale);
                scale = T::one();
            }
        }
    }

    v.iter_mut().for_each(|w| *w = *w * scale);
    let model = TextClassifierModel { config: config.clone(), weights: v, bias, hyper: hyper.clone() };
    model.check_invariants()?;
    Ok(model)
}

/// Trains on every record of `corpus` in corpus order.
pub fn train<T: Scalar>(
    corpus: &Corpus,
    config: &FeaturizerConfig,
    hyper: &Hyper,
) -> Result<TextClassifierModel<T>, ClassifierError> {
    config.validate()?;
    let examples: Vec<(SparseVector<T>, bool)> =
        corpus.records.iter().map(|r| (featurize(&tokenize(&r.text), config), r.label.is_negative())).collect();
    train_examples(&examples, config, hyper)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T = f64> {
    pub record_id: String,
    pub p_negative: T,
    pub predicted: Label,
    pub confidence: T,
    pub correct: bool,
}

impl<T: Scalar> Prediction<T> {
    /// Applies the decision rule: negative iff `p_negative > 0.5`.
    pub fn from_probability(record_id: impl Into<String>, p_negative: T, truth: Label) -> Self {
        let half = T::lit(0.5);
        let predicted = if p_negative > half { Label::Negative } else { Label::Positive };
        Prediction {
            record_id: record_id.into(),
            p_negative,
            predicted,
            confidence: p_negative.max(T::one() - p_negative),
            correct: predicted == truth,
        }
    }
}

pub fn predict_text<T: Scalar>(model: &TextClassifierModel<T>, text: &str) -> T {
    model.p_negative(&model.features(text))
}

pub fn predict<T: Scalar>(model: &TextClassifierModel<T>, record: &CaptionRecord) -> Prediction<T> {
    Prediction::from_probability(record.id.clone(), predict_text(model, &record.text), record.label)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    config: FeaturizerConfig,
    hyper: Hyper,
    bias: f64,
    weights: SparseWeights,
}

#[derive(Serialize, Deserialize)]
struct SparseWeights {
    indices: Vec<u32>,
    values: Vec<f64>,
}

pub fn save_model<T: Scalar>(model: &TextClassifierModel<T>, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
    let (indices, values) =
        model.weights.iter().enumerate().filter(|(_, w)| !w.is_zero()).map(|(i, w)| (i as u32, w.as_f64())).unzip();
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        config: model.config.clone(),
        hyper: model.hyper.clone(),
        bias: model.bias.as_f64(),
        weights: SparseWeights { indices, values },
    };
    let json = serde_json::to_string(&file).map_err(|e| ClassifierError::Format(e.to_string()))?;
    fs::write(path.as_ref(), json).map_err(|source| ClassifierError::Io { path: path.as_ref().into(), source })
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<TextClassifierModel<T>, ClassifierError> {
    let text = fs::read_to_string(path.as_ref())
        .map_err(|source| ClassifierError::Io { path: path.as_ref().into(), source })?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| ClassifierError::Format(e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(ClassifierError::Format(format!("unsupported format tag `{}`", file.format)));
    }
    file.config.validate()?;
    if file.weights.indices.len() != file.weights.values.len() {
        return Err(ClassifierError::Format("weight indices and values differ in length".into()));
    }
    let mut model = TextClassifierModel::<T>::zeros(file.config, file.hyper);
    model.bias = T::lit(file.bias);
    for (&i, &w) in file.weights.indices.iter().zip(&file.weights.values) {
        let slot = model
            .weights
            .get_mut(i as usize)
            .ok_or_else(|| ClassifierError::Format(format!("weight index {i} out of range")))?;
        *slot = T::lit(w);
    }
    model.check_invariants()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CaptionRecord, NegType};
    use proptest::prelude::*;

    fn small_config() -> FeaturizerConfig {
        FeaturizerConfig { hash_dim: 1 << 12, ..Default::default() }
    }

    fn toy_corpus() -> Corpus {
        let nouns = ["dog", "cat", "car", "tree", "boat", "house", "bird", "kite", "horse", "train"];
        let mut recs = Vec::new();
        for i in 0..50 {
            let n = nouns[i % nouns.len()];
            recs.push(CaptionRecord::positive(
                format!("p{i}"),
                format!("i{i}"),
                format!("a blue {n} near the {}", nouns[(i * 7) % 10]),
            ));
            recs.push(CaptionRecord::negative(
                format!("n{i}"),
                format!("i{i}"),
                format!("a red {n} near the {}", nouns[(i * 3) % 10]),
                NegType::Replace,
                format!("p{i}"),
            ));
        }
        Corpus::from_records(recs).unwrap()
    }

    #[test]
    fn zero_model_predicts_positive_at_half() {
        let m = TextClassifierModel::<f64>::zeros(small_config(), Hyper::default());
        let rec = CaptionRecord::positive("x", "i", "anything at all");
        let p = predict(&m, &rec);
        assert_eq!(p.p_negative, 0.5);
        assert_eq!(p.predicted, Label::Positive);
        assert_eq!(p.confidence, 0.5);
        assert!(p.correct);
    }

    #[test]
    fn margin_two_gives_known_probability() {
        let mut m = TextClassifierModel::<f64>::zeros(small_config(), Hyper::default());
        m.bias = 2.0;
        // 1 / (1 + e^-2), evaluated to 20 digits offline
        assert!((predict_text(&m, "") - 0.880_797_077_977_882_3).abs() < 1e-15);
    }

    #[test]
    fn separable_corpus_trains() {
        let c = toy_corpus();
        let m: TextClassifierModel<f64> = train(&c, &small_config(), &Hyper::default()).unwrap();
        let acc = c.records.iter().filter(|r| predict(&m, r).correct).count() as f64 / c.len() as f64;
        assert!(acc >= 0.98, "accuracy {acc}");
        let m2: TextClassifierModel<f64> = train(&c, &small_config(), &Hyper::default()).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn single_label_corpus_is_rejected() {
        let c = Corpus::from_records(vec![CaptionRecord::positive("a", "i", "x y")]).unwrap();
        assert!(matches!(
            train::<f64>(&c, &small_config(), &Hyper::default()),
            Err(ClassifierError::SingleLabel(Label::Negative))
        ));
    }

    #[test]
    fn f32_training_works() {
        let c = toy_corpus();
        let m: TextClassifierModel<f32> = train(&c, &small_config(), &Hyper::default()).unwrap();
        let acc = c.records.iter().filter(|r| predict(&m, r).correct).count();
        assert!(acc >= 98);
    }

    #[test]
    fn save_load_round_trip() {
        let c = toy_corpus();
        let m: TextClassifierModel<f64> = train(&c, &small_config(), &Hyper::default()).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_model(&m, f.path()).unwrap();
        let back: TextClassifierModel<f64> = load_model(f.path()).unwrap();
        assert_eq!(back, m);
        std::fs::write(f.path(), r#"{"format":"other","config":{"ngram_orders":[1],"hash_dim":4,"hash_seed":0},"hyper":{"learning_rate":0.1,"epochs":1,"l2":0.0,"seed":0},"bias":0.0,"weights":{"indices":[],"values":[]}}"#).unwrap();
        assert!(matches!(load_model::<f64>(f.path()), Err(ClassifierError::Format(_))));
    }

    #[test]
    fn bad_hyper_rejected() {
        let c = toy_corpus();
        let h = Hyper { learning_rate: -1.0, ..Default::default() };
        assert!(matches!(train::<f64>(&c, &small_config(), &h), Err(ClassifierError::InvalidHyper(_))));
    }

    proptest! {
        #[test]
        fn bias_monotone(b1 in -20.0f64..20.0, d in 0.0f64..10.0) {
            let mut m = TextClassifierModel::<f64>::zeros(small_config(), Hyper::default());
            m.weights[3] = 0.7;
            m.bias = b1;
            let lo = predict_text(&m, "some words here");
            m.bias = b1 + d;
            let hi = predict_text(&m, "some words here");
            prop_assert!(hi >= lo);
            prop_assert!(lo > 0.0 && lo < 1.0);
        }
    }
}
