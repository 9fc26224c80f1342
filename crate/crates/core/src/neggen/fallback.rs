//! Offline negative generators used when no LLM endpoint is configured.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::stopwords::is_stopword;
use super::validate::validate_negative;
use super::NegGenError;
use crate::corpus::NegType;
use crate::textclf::tokenize;

/// Substitution table: category -> interchangeable single-token words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    categories: BTreeMap<String, Vec<String>>,
    index: HashMap<String, String>,
}

const DEFAULT_LEXICON: &[(&str, &[&str])] = &[
    (
        "animal",
        &["bear", "bird", "cat", "cow", "dog", "elephant", "fox", "giraffe", "horse", "rabbit", "sheep", "zebra"],
    ),
    ("color", &["black", "blue", "brown", "gray", "green", "orange", "pink", "purple", "red", "white", "yellow"]),
    ("count", &["one", "two", "three", "four", "five", "six"]),
    ("food", &["apple", "banana", "broccoli", "cake", "carrot", "donut", "pizza", "sandwich"]),
    (
        "object",
        &[
            "airplane", "ball", "bench", "bicycle", "boat", "bus", "car", "chair", "kite", "table", "train", "truck",
            "umbrella",
        ],
    ),
    ("person", &["boy", "child", "girl", "man", "woman"]),
    ("relation", &["above", "behind", "below", "beside", "left", "right"]),
    ("size", &["big", "large", "short", "small", "tall", "tiny"]),
];

impl Lexicon {
    pub fn new(categories: BTreeMap<String, Vec<String>>) -> Result<Self, NegGenError> {
        let mut index = HashMap::new();
        for (cat, words) in &categories {
            for w in words {
                if tokenize(w) != [w.clone()] {
                    return Err(NegGenError::Lexicon(format!("`{w}` is not a single lowercase token")));
                }
                if let Some(prev) = index.insert(w.clone(), cat.clone()) {
                    return Err(NegGenError::Lexicon(format!("`{w}` appears in `{prev}` and `{cat}`")));
                }
            }
        }
        Ok(Lexicon { categories, index })
    }

    pub fn empty() -> Self {
        Lexicon { categories: BTreeMap::new(), index: HashMap::new() }
    }

    /// Small built-in table covering common COCO-style caption vocabulary.
    pub fn builtin() -> Self {
        let cats =
            DEFAULT_LEXICON.iter().map(|(c, ws)| (c.to_string(), ws.iter().map(|w| w.to_string()).collect())).collect();
        Lexicon::new(cats).expect("built-in lexicon is valid")
    }

    /// Reads a JSON object `{category: [word, ...]}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, NegGenError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| NegGenError::Lexicon(format!("{}: {e}", path.as_ref().display())))?;
        let cats: BTreeMap<String, Vec<String>> =
            serde_json::from_str(&text).map_err(|e| NegGenError::Lexicon(e.to_string()))?;
        Lexicon::new(cats)
    }

    pub fn alternatives(&self, word: &str) -> Vec<&str> {
        self.index
            .get(word)
            .map(|cat| self.categories[cat].iter().map(String::as_str).filter(|w| *w != word).collect())
            .unwrap_or_default()
    }
}

/// Splits a whitespace word into leading punctuation, core and trailing
/// punctuation.
fn split_word(word: &str) -> (&str, &str, &str) {
    let start = word.find(|c: char| c.is_alphanumeric()).unwrap_or(word.len());
    let end =
        word.rfind(|c: char| c.is_alphanumeric()).map_or(start, |i| i + word[i..].chars().next().unwrap().len_utf8());
    (&word[..start], &word[start..end], &word[end..])
}

fn match_case(template: &str, word: &str) -> String {
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = word.chars();
        chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or_default()
    } else {
        word.to_string()
    }
}

/// Replaces one lexicon word with a seeded same-category alternative.
pub fn fallback_replace(caption: &str, lexicon: &Lexicon, seed: u64) -> Result<String, NegGenError> {
    let mut words: Vec<String> = caption.split_whitespace().map(str::to_string).collect();
    let candidates: Vec<(usize, Vec<&str>)> = words
        .iter()
        .enumerate()
        .filter_map(|(i, w)| {
            let alts = lexicon.alternatives(&split_word(w).1.to_lowercase());
            (!alts.is_empty()).then_some((i, alts))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pos, alts) = candidates.choose(&mut rng).ok_or(NegGenError::NoReplaceableToken)?;
    let alt = alts.choose(&mut rng).expect("nonempty alternatives");
    let (pre, core, post) = split_word(&words[*pos]);
    words[*pos] = format!("{pre}{}{post}", match_case(core, alt));
    Ok(words.join(" "))
}

/// Transposes two whitespace words carrying distinct content tokens.
///
/// Candidate pairs are ordered outermost first (widest span, then leftmost);
/// `seed` indexes into that list, so seed 0 swaps the outermost pair. Returns
/// `None` when fewer than two distinct content tokens exist.
pub fn fallback_swap(caption: &str, seed: u64) -> Option<String> {
    let words: Vec<&str> = caption.split_whitespace().collect();
    let content: Vec<(usize, String)> = words
        .iter()
        .enumerate()
        .filter_map(|(i, w)| {
            let toks = tokenize(w);
            toks.iter().any(|t| !is_stopword(t)).then(|| (i, toks.join(" ")))
        })
        .collect();

    let mut pairs = Vec::new();
    for (a, (i, fi)) in content.iter().enumerate() {
        for (j, fj) in &content[a + 1..] {
            if fi != fj {
                pairs.push((*i, *j));
            }
        }
    }
    if pairs.is_empty() {
        return None;
    }
    pairs.sort_by_key(|&(i, j)| (std::cmp::Reverse(j - i), i));

    let start = (seed % pairs.len() as u64) as usize;
    (0..pairs.len()).find_map(|k| {
        let (i, j) = pairs[(start + k) % pairs.len()];
        let mut out = words.clone();
        out.swap(i, j);
        let out = out.join(" ");
        validate_negative(caption, &out, NegType::Swap).then_some(out)
    })
}
