use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::{export::match_prompt, LogitPair, ScoringError};
use crate::transport::Transport;

/// One (caption, image) pair to be scored remotely.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ScoreRequest {
    pub pair_id: String,
    pub image_ref: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoringSettings {
    pub in_flight: usize,
}

impl Default for ScoringSettings {
    fn default() -> Self {
        ScoringSettings { in_flight: 4 }
    }
}

/// Request body sent to the scoring endpoint.
pub fn score_request(req: &ScoreRequest) -> Value {
    json!({
        "pair_id": req.pair_id,
        "image_ref": req.image_ref,
        "caption": req.caption,
        "prompt": match_prompt(&req.caption),
    })
}

fn logit(body: &Value, field: &str, pair_id: &str) -> Result<f64, ScoringError> {
    let bad = |message: String| ScoringError::BadResponse { pair_id: pair_id.to_string(), message };
    let v = body.get(field).ok_or_else(|| bad(format!("missing `{field}`")))?;
    let x = v.as_f64().ok_or_else(|| bad(format!("`{field}` is not a number: {v}")))?;
    if !x.is_finite() {
        return Err(bad(format!("`{field}` is not finite")));
    }
    Ok(x)
}

fn fetch_one(transport: &dyn Transport, req: &ScoreRequest) -> Result<LogitPair, ScoringError> {
    let body = transport
        .post_json(&score_request(req))
        .map_err(|source| ScoringError::Transport { pair_id: req.pair_id.clone(), source })?;
    if let Some(id) = body.get("pair_id").and_then(Value::as_str) {
        if id != req.pair_id {
            return Err(ScoringError::BadResponse {
                pair_id: req.pair_id.clone(),
                message: format!("response is for `{id}`"),
            });
        }
    }
    Ok(LogitPair {
        pair_id: req.pair_id.clone(),
        yes_logit: logit(&body, "yes_logit", &req.pair_id)?,
        no_logit: logit(&body, "no_logit", &req.pair_id)?,
    })
}

/// Scores every pair through `transport`, bounded to `in_flight` concurrent
/// requests; results follow request order. An empty list makes no request.
pub fn fetch_logits(
    transport: &dyn Transport,
    pairs: &[ScoreRequest],
    settings: &ScoringSettings,
) -> Result<Vec<LogitPair>, ScoringError> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.in_flight.max(1))
        .build()
        .map_err(|e| ScoringError::BadResponse { pair_id: String::new(), message: e.to_string() })?;
    pool.install(|| pairs.par_iter().map(|p| fetch_one(transport, p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{FixtureEntry, FixtureTransport, TransportError};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn req(id: &str) -> ScoreRequest {
        ScoreRequest { pair_id: id.into(), image_ref: format!("img_{id}"), caption: format!("caption {id}") }
    }

    #[test]
    fn replays_fixture_in_order() {
        let reqs: Vec<_> = ["a", "b", "c"].iter().map(|id| req(id)).collect();
        let entries = reqs.iter().enumerate().map(|(i, r)| {
            FixtureEntry::new(score_request(r), json!({"pair_id": r.pair_id, "yes_logit": i as f64, "no_logit": -1.0}))
        });
        let t = FixtureTransport::from_entries(entries);
        let out = fetch_logits(&t, &reqs, &ScoringSettings { in_flight: 2 }).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2], LogitPair { pair_id: "c".into(), yes_logit: 2.0, no_logit: -1.0 });
    }

    #[test]
    fn nan_string_names_the_pair() {
        let r = req("p7");
        let t = FixtureTransport::from_entries([FixtureEntry::new(
            score_request(&r),
            json!({"pair_id": "p7", "yes_logit": "NaN", "no_logit": 0.0}),
        )]);
        let err = fetch_logits(&t, &[r], &ScoringSettings::default()).unwrap_err();
        assert!(err.to_string().contains("p7"), "{err}");
        assert!(!err.is_transport());
    }

    struct Counting(AtomicUsize);
    impl Transport for Counting {
        fn post_json(&self, _: &Value) -> Result<Value, TransportError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Err(TransportError::Decode("unused".into()))
        }
    }

    #[test]
    fn empty_list_makes_no_call() {
        let t = Counting(AtomicUsize::new(0));
        assert!(fetch_logits(&t, &[], &ScoringSettings::default()).unwrap().is_empty());
        assert_eq!(t.0.load(Ordering::SeqCst), 0);
        assert!(fetch_logits(&t, &[req("x")], &ScoringSettings::default()).unwrap_err().is_transport());
    }

    #[test]
    fn request_carries_prompt() {
        let body = score_request(&req("q"));
        assert_eq!(body["prompt"], "Does this image match the following caption caption q. Answer Yes or No directly.");
    }
}
