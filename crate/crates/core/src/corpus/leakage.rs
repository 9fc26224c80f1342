use std::collections::HashMap;

use serde::Serialize;

use super::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CollisionKind {
    Caption,
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Collision {
    pub kind: CollisionKind,
    pub train_id: String,
    pub test_id: String,
    /// Normalized caption or image reference shared by both records.
    pub key: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LeakageReport {
    pub collisions: Vec<Collision>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.collisions.is_empty()
    }

    pub fn count(&self, kind: CollisionKind) -> usize {
        self.collisions.iter().filter(|c| c.kind == kind).count()
    }
}

/// Lowercases, collapses whitespace and strips terminal punctuation.
pub fn normalize_caption(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || matches!(c, '…' | '。' | '！' | '？' | '»' | '”' | '’'))
        .trim_end()
        .to_string()
}

/// Lists every train/test pair sharing a normalized caption or an image
/// reference, in train order then test order.
pub fn leakage_check(train: &Corpus, test: &Corpus) -> LeakageReport {
    let mut by_caption: HashMap<String, Vec<usize>> = HashMap::new();
    let mut by_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, rec) in test.records.iter().enumerate() {
        by_caption.entry(normalize_caption(&rec.text)).or_default().push(j);
        by_image.entry(rec.image_ref.as_str()).or_default().push(j);
    }

    let mut collisions = Vec::new();
    for rec in &train.records {
        let key = normalize_caption(&rec.text);
        if let Some(hits) = by_caption.get(&key) {
            collisions.extend(hits.iter().map(|&j| Collision {
                kind: CollisionKind::Caption,
                train_id: rec.id.clone(),
                test_id: test.records[j].id.clone(),
                key: key.clone(),
            }));
        }
        if let Some(hits) = by_image.get(rec.image_ref.as_str()) {
            collisions.extend(hits.iter().map(|&j| Collision {
                kind: CollisionKind::Image,
                train_id: rec.id.clone(),
                test_id: test.records[j].id.clone(),
                key: rec.image_ref.clone(),
            }));
        }
    }
    LeakageReport { collisions }
}
