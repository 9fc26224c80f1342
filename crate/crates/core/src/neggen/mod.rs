//! Hard-negative caption generation: LLM prompts and reply handling, plus
//! offline replace/swap generators.

mod fallback;
mod prompt;
mod stopwords;
mod validate;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::corpus::{CaptionRecord, Corpus, Label, NegType};
use crate::transport::{Transport, TransportError};

pub use fallback::{fallback_replace, fallback_swap, Lexicon};
pub use prompt::{build_prompt, PromptPayload, NO_CANDIDATE, TEMPLATE_VERSION};
pub use stopwords::{content_tokens, is_stopword, STOPWORDS};
pub use validate::validate_negative;

#[derive(Debug, Error)]
pub enum NegGenError {
    #[error("caption is empty")]
    EmptyCaption,
    #[error("caption has no token present in the substitution lexicon")]
    NoReplaceableToken,
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegStatus {
    Accepted,
    RejectedTooShort,
    RejectedInvalid,
    TransportError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeResult {
    pub status: NegStatus,
    pub text: Option<String>,
    pub raw_response: String,
}

impl NegativeResult {
    fn rejected(status: NegStatus, raw_response: String) -> Self {
        NegativeResult { status, text: None, raw_response }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlmSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Maximum concurrent requests in [`generate_batch`].
    pub in_flight: usize,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings { model: "gpt-4".into(), temperature: 0.0, max_tokens: 96, in_flight: 4 }
    }
}

/// Chat-completions request body for one payload.
pub fn chat_request(payload: &PromptPayload, settings: &LlmSettings) -> Value {
    json!({
        "model": settings.model,
        "messages": [
            {"role": "system", "content": payload.system_text},
            {"role": "user", "content": payload.user_text},
        ],
        "temperature": settings.temperature,
        "n": 1,
        "max_tokens": settings.max_tokens,
    })
}

/// First message content of a chat-completions response.
pub fn response_content(body: &Value) -> Option<&str> {
    body.pointer("/choices/0/message/content").and_then(Value::as_str)
}

fn strip_label<'a>(line: &'a str, labels: &[&str]) -> &'a str {
    let trimmed = line.trim();
    for label in labels {
        if trimmed.len() >= label.len() && trimmed[..label.len()].eq_ignore_ascii_case(label) {
            return trimmed[label.len()..].trim();
        }
    }
    trimmed
}

/// Extracts the candidate caption from a model reply; `None` means the model
/// declined.
pub fn parse_reply(content: &str, strategy: NegType) -> Option<String> {
    let lines: Vec<&str> = content.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let picked = match strategy {
        NegType::Replace => lines.first().copied()?,
        NegType::Swap => lines
            .iter()
            .copied()
            .find(|l| l.to_ascii_lowercase().starts_with("new caption:"))
            .or_else(|| lines.last().copied())?,
    };
    let text = strip_label(picked, &["new caption:", "output:", "caption:"])
        .trim_matches(|c| c == '"' || c == '\'' || c == '`')
        .trim();
    (!text.is_empty() && !text.eq_ignore_ascii_case(NO_CANDIDATE)).then(|| text.to_string())
}

/// Whether a swap can possibly produce a different sentence.
pub fn has_swappable_content(caption: &str) -> bool {
    let mut distinct = content_tokens(caption);
    distinct.sort();
    distinct.dedup();
    distinct.len() >= 2
}

/// Asks the LLM behind `transport` for one negative of `caption`.
pub fn generate_negative(
    caption: &str,
    strategy: NegType,
    transport: &dyn Transport,
    settings: &LlmSettings,
) -> Result<NegativeResult, NegGenError> {
    let payload = build_prompt(caption, strategy)?;
    if strategy == NegType::Swap && !has_swappable_content(caption) {
        return Ok(NegativeResult::rejected(NegStatus::RejectedTooShort, String::new()));
    }
    let body = match transport.post_json(&chat_request(&payload, settings)) {
        Ok(body) => body,
        Err(e) => return Ok(NegativeResult::rejected(NegStatus::TransportError, e.to_string())),
    };
    let raw = body.to_string();
    let Some(content) = response_content(&body) else {
        let err = TransportError::Decode("response has no choices[0].message.content".into());
        return Ok(NegativeResult::rejected(NegStatus::TransportError, format!("{err}: {raw}")));
    };
    let result = match parse_reply(content, strategy) {
        None if strategy == NegType::Swap => NegativeResult::rejected(NegStatus::RejectedTooShort, raw),
        None => NegativeResult::rejected(NegStatus::RejectedInvalid, raw),
        Some(text) if validate_negative(caption, &text, strategy) => {
            NegativeResult { status: NegStatus::Accepted, text: Some(text), raw_response: raw }
        }
        Some(_) => NegativeResult::rejected(NegStatus::RejectedInvalid, raw),
    };
    Ok(result)
}

/// Runs [`generate_negative`] over many captions with at most
/// `settings.in_flight` concurrent requests. Results are in input order.
pub fn generate_batch(
    captions: &[&str],
    strategy: NegType,
    transport: &dyn Transport,
    settings: &LlmSettings,
) -> Result<Vec<NegativeResult>, NegGenError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.in_flight.max(1))
        .build()
        .map_err(|e| NegGenError::Pool(e.to_string()))?;
    pool.install(|| captions.par_iter().map(|c| generate_negative(c, strategy, transport, settings)).collect())
}

/// Offline stand-in for [`generate_negative`].
pub fn generate_fallback(caption: &str, strategy: NegType, lexicon: &Lexicon, seed: u64) -> NegativeResult {
    let produced = match strategy {
        NegType::Replace => fallback_replace(caption, lexicon, seed).ok(),
        NegType::Swap => fallback_swap(caption, seed),
    };
    match produced {
        Some(text) if validate_negative(caption, &text, strategy) => {
            NegativeResult { status: NegStatus::Accepted, text: Some(text), raw_response: String::new() }
        }
        Some(_) => NegativeResult::rejected(NegStatus::RejectedInvalid, String::new()),
        None if strategy == NegType::Swap => NegativeResult::rejected(NegStatus::RejectedTooShort, String::new()),
        None => NegativeResult::rejected(NegStatus::RejectedInvalid, String::new()),
    }
}

pub enum Generator<'a> {
    Llm { transport: &'a dyn Transport, settings: LlmSettings },
    Fallback { lexicon: &'a Lexicon, seed: u64 },
}

impl Generator<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::Llm { .. } => "llm",
            Generator::Fallback { .. } => "fallback",
        }
    }
}

/// Audit line for one generation attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenLogEntry {
    pub source_id: String,
    pub strategy: NegType,
    pub negative_id: Option<String>,
    #[serde(flatten)]
    pub result: NegativeResult,
}

pub fn negative_id(source_id: &str, strategy: NegType) -> String {
    format!("{source_id}-neg-{strategy}")
}

/// SplitMix64 step, used to derive per-record seeds from one run seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates negatives for every positive in `corpus`, for each strategy.
/// The returned corpus is the input followed by the accepted negatives,
/// grouped by strategy in input order.
pub fn generate_corpus(
    corpus: &Corpus,
    strategies: &[NegType],
    generator: &Generator<'_>,
) -> Result<(Corpus, Vec<GenLogEntry>), NegGenError> {
    let positives: Vec<&CaptionRecord> = corpus.records.iter().filter(|r| r.label == Label::Positive).collect();
    let mut out = corpus.clone();
    let mut log = Vec::new();
    for &strategy in strategies {
        let results = match generator {
            Generator::Llm { transport, settings } => {
                let captions: Vec<&str> = positives.iter().map(|r| r.text.as_str()).collect();
                generate_batch(&captions, strategy, *transport, settings)?
            }
            Generator::Fallback { lexicon, seed } => positives
                .iter()
                .enumerate()
                .map(|(i, r)| generate_fallback(&r.text, strategy, lexicon, derive_seed(*seed, i as u64)))
                .collect(),
        };
        for (pos, result) in positives.iter().zip(results) {
            let mut entry = GenLogEntry { source_id: pos.id.clone(), strategy, negative_id: None, result };
            if let Some(text) = &entry.result.text {
                let id = negative_id(&pos.id, strategy);
                out.records.push(CaptionRecord::negative(
                    id.clone(),
                    pos.image_ref.clone(),
                    text.clone(),
                    strategy,
                    pos.id.clone(),
                ));
                entry.negative_id = Some(id);
            }
            log.push(entry);
        }
    }
    out.provenance.insert("generator".into(), generator.name().into());
    out.provenance.insert("template_version".into(), TEMPLATE_VERSION.into());
    out.provenance.insert(
        "swap_judgement".into(),
        match generator {
            Generator::Llm { .. } => "llm".into(),
            Generator::Fallback { .. } => "structural: >=2 distinct content tokens".into(),
        },
    );
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{FixtureEntry, FixtureTransport};

    fn reply(content: &str) -> Value {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
    }

    fn fixture_for(caption: &str, strategy: NegType, content: &str) -> FixtureTransport {
        let payload = build_prompt(caption, strategy).unwrap();
        let req = chat_request(&payload, &LlmSettings::default());
        FixtureTransport::from_entries([FixtureEntry::new(req, reply(content))])
    }

    #[test]
    fn replace_reply_accepted() {
        let cap = "a photo of a broken down stop sign";
        let t = fixture_for(cap, NegType::Replace, "a photo of a brand new stop sign");
        let r = generate_negative(cap, NegType::Replace, &t, &LlmSettings::default()).unwrap();
        assert_eq!(r.status, NegStatus::Accepted);
        assert_eq!(r.text.as_deref(), Some("a photo of a brand new stop sign"));
        assert!(r.raw_response.contains("brand new"));
    }

    #[test]
    fn swap_reply_accepted() {
        let cap = "an airplane is flying in the blue sky";
        let t = fixture_for(
            cap,
            NegType::Swap,
            "Components: airplane, flying, blue, sky\nNew caption: a blue airplane is flying in the sky",
        );
        let r = generate_negative(cap, NegType::Swap, &t, &LlmSettings::default()).unwrap();
        assert_eq!(r.status, NegStatus::Accepted);
        assert_eq!(r.text.as_deref(), Some("a blue airplane is flying in the sky"));
    }

    #[test]
    fn short_swap_is_rejected_without_a_request() {
        let t = FixtureTransport::default();
        let r = generate_negative("a dog", NegType::Swap, &t, &LlmSettings::default()).unwrap();
        assert_eq!(r.status, NegStatus::RejectedTooShort);
        assert!(r.text.is_none());
    }

    #[test]
    fn model_declines_swap() {
        let cap = "two dogs sleeping";
        let t = fixture_for(cap, NegType::Swap, "Components: dogs, sleeping, two\nNew caption: NONE");
        let r = generate_negative(cap, NegType::Swap, &t, &LlmSettings::default()).unwrap();
        assert_eq!(r.status, NegStatus::RejectedTooShort);
    }

    #[test]
    fn invalid_reply_and_transport_failures() {
        let cap = "a cat on a mat";
        let t = fixture_for(cap, NegType::Replace, "a cat on a mat");
        let r = generate_negative(cap, NegType::Replace, &t, &LlmSettings::default()).unwrap();
        assert_eq!(r.status, NegStatus::RejectedInvalid);

        let miss =
            generate_negative(cap, NegType::Replace, &FixtureTransport::default(), &LlmSettings::default()).unwrap();
        assert_eq!(miss.status, NegStatus::TransportError);

        let payload = build_prompt(cap, NegType::Replace).unwrap();
        let req = chat_request(&payload, &LlmSettings::default());
        let t = FixtureTransport::from_entries([FixtureEntry::new(req, json!({"error": "x"}))]);
        let r = generate_negative(cap, NegType::Replace, &t, &LlmSettings::default()).unwrap();
        assert_eq!(r.status, NegStatus::TransportError);
    }

    #[test]
    fn batch_preserves_order() {
        let caps = ["a cat on a mat", "a red car", "a big dog"];
        let outs = ["a dog on a mat", "a blue car", "a small dog"];
        let settings = LlmSettings { in_flight: 3, ..Default::default() };
        let entries: Vec<FixtureEntry> = caps
            .iter()
            .zip(outs)
            .map(|(c, o)| {
                FixtureEntry::new(chat_request(&build_prompt(c, NegType::Replace).unwrap(), &settings), reply(o))
            })
            .collect();
        let t = FixtureTransport::from_entries(entries);
        let res = generate_batch(&caps, NegType::Replace, &t, &settings).unwrap();
        let texts: Vec<_> = res.iter().map(|r| r.text.as_deref().unwrap()).collect();
        assert_eq!(texts, outs);
    }

    #[test]
    fn reply_parsing() {
        assert_eq!(parse_reply("Output: \"a dog\"\n", NegType::Replace).as_deref(), Some("a dog"));
        assert_eq!(parse_reply("Components: a, b\nNew caption: b a", NegType::Swap).as_deref(), Some("b a"));
        assert_eq!(parse_reply("new caption: none", NegType::Swap), None);
        assert_eq!(parse_reply("   ", NegType::Replace), None);
    }

    #[test]
    fn fallback_corpus_generation() {
        let corpus = Corpus::from_records(vec![
            CaptionRecord::positive("p1", "i1", "a red car parked near a tree"),
            CaptionRecord::positive("p2", "i2", "a dog"),
        ])
        .unwrap();
        let lex = Lexicon::builtin();
        let (out, log) = generate_corpus(
            &corpus,
            &[NegType::Replace, NegType::Swap],
            &Generator::Fallback { lexicon: &lex, seed: 9 },
        )
        .unwrap();
        assert_eq!(log.len(), 4);
        // p1 replace, p2 replace, p1 swap accepted; p2 swap too short
        assert_eq!(out.count(Label::Negative), 3);
        assert_eq!(log[3].result.status, NegStatus::RejectedTooShort);
        assert!(Corpus::from_records(out.records.clone()).is_ok());
        assert!(out.dangling_sources().is_empty());
        assert_eq!(out.provenance["generator"], "fallback");
    }
}
