//! Effective pipeline settings: defaults, then a flat `key = value` file,
//! then command-line flags. Keys are the long flag names.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{BalanceMode, NegType};
use crate::debias::{
    FilterMode, FilterOptions, ProbeConfig, DEFAULT_AUDIT_THRESHOLD, DEFAULT_FOLDS, DEFAULT_K_PERCENT,
};
use crate::metrics::Aggregation;
use crate::textclf::{FeaturizerConfig, Hyper};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { key: String, origin: String },
    #[error("{origin}: bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String, origin: String },
    #[error("{origin}: expected `key = value`")]
    Syntax { origin: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyChoice {
    Replace,
    Swap,
    Both,
}

impl StrategyChoice {
    pub fn strategies(self) -> Vec<NegType> {
        match self {
            StrategyChoice::Replace => vec![NegType::Replace],
            StrategyChoice::Swap => vec![NegType::Swap],
            StrategyChoice::Both => vec![NegType::Replace, NegType::Swap],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub folds: usize,
    pub k_percent: f64,
    pub audit_threshold: f64,
    pub strategy: StrategyChoice,
    pub per_type_balance: bool,
    pub filter_mode: FilterMode,
    pub aggregation: Aggregation,
    pub featurizer: FeaturizerConfig,
    pub hyper: Hyper,
    pub llm_model: String,
    pub llm_endpoint: Option<String>,
    pub llm_fixture: Option<PathBuf>,
    pub score_endpoint: Option<String>,
    pub score_fixture: Option<PathBuf>,
    pub in_flight: usize,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            folds: DEFAULT_FOLDS,
            k_percent: DEFAULT_K_PERCENT,
            audit_threshold: DEFAULT_AUDIT_THRESHOLD,
            strategy: StrategyChoice::Both,
            per_type_balance: false,
            filter_mode: FilterMode::Joint,
            aggregation: Aggregation::Pooled,
            featurizer: FeaturizerConfig::default(),
            hyper: Hyper::default(),
            llm_model: "gpt-4".into(),
            llm_endpoint: None,
            llm_fixture: None,
            score_endpoint: None,
            score_fixture: None,
            in_flight: 4,
            max_retries: 4,
            timeout_secs: 60,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, origin: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
        origin: origin.into(),
    })
}

impl PipelineConfig {
    /// Sets one key. `origin` names the source for error messages.
    pub fn apply(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: reason.into(),
            origin: origin.into(),
        };
        match key {
            "seed" => self.seed = parse(key, value, origin)?,
            "folds" => {
                let v: usize = parse(key, value, origin)?;
                if v < 2 {
                    return Err(bad("need at least 2 folds"));
                }
                self.folds = v;
            }
            "k" => {
                let v: f64 = parse(key, value, origin)?;
                if !(0.0..=100.0).contains(&v) {
                    return Err(bad("k must be within [0, 100]"));
                }
                self.k_percent = v;
            }
            "audit-threshold" => self.audit_threshold = parse(key, value, origin)?,
            "strategy" => {
                self.strategy = match value {
                    "replace" => StrategyChoice::Replace,
                    "swap" => StrategyChoice::Swap,
                    "both" => StrategyChoice::Both,
                    _ => return Err(bad("expected replace, swap or both")),
                }
            }
            "per-type-balance" => self.per_type_balance = parse(key, value, origin)?,
            "filter-mode" => {
                self.filter_mode = match value {
                    "joint" => FilterMode::Joint,
                    "separate" => FilterMode::Separate,
                    _ => return Err(bad("expected joint or separate")),
                }
            }
            "aggregation" => {
                self.aggregation = match value {
                    "pooled" => Aggregation::Pooled,
                    "per-group" => Aggregation::PerGroup,
                    _ => return Err(bad("expected pooled or per-group")),
                }
            }
            "ngram-orders" => {
                let orders: BTreeSet<usize> =
                    value.split(',').map(|s| parse::<usize>(key, s.trim(), origin)).collect::<Result<_, _>>()?;
                self.featurizer.ngram_orders = orders;
            }
            "hash-dim" => self.featurizer.hash_dim = parse(key, value, origin)?,
            "hash-seed" => self.featurizer.hash_seed = parse(key, value, origin)?,
            "lr" => self.hyper.learning_rate = parse(key, value, origin)?,
            "epochs" => self.hyper.epochs = parse(key, value, origin)?,
            "l2" => self.hyper.l2 = parse(key, value, origin)?,
            "llm-model" => self.llm_model = value.to_string(),
            "llm-endpoint" => self.llm_endpoint = Some(value.to_string()),
            "llm-fixture" => self.llm_fixture = Some(PathBuf::from(value)),
            "score-endpoint" => self.score_endpoint = Some(value.to_string()),
            "score-fixture" => self.score_fixture = Some(PathBuf::from(value)),
            "in-flight" => self.in_flight = parse(key, value, origin)?,
            "max-retries" => self.max_retries = parse(key, value, origin)?,
            "timeout" => self.timeout_secs = parse(key, value, origin)?,
            _ => return Err(ConfigError::UnknownKey { key: key.into(), origin: origin.into() }),
        }
        if key == "hash-dim" || key == "ngram-orders" {
            self.featurizer.validate().map_err(|e| bad(&e.to_string()))?;
        }
        if matches!(key, "lr" | "l2") {
            self.hyper.validate().map_err(|e| bad(&e.to_string()))?;
        }
        Ok(())
    }

    /// Applies every `key = value` line of a config file. `#` starts a
    /// comment.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = format!("{source}:{}", i + 1);
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { origin: origin.clone() })?;
            self.apply(key.trim(), value.trim(), &origin)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn probe(&self) -> ProbeConfig {
        ProbeConfig { featurizer: self.featurizer.clone(), hyper: self.hyper.clone() }
    }

    pub fn filter_options(&self) -> FilterOptions {
        FilterOptions {
            n_folds: self.folds,
            k_percent: self.k_percent,
            seed: self.seed,
            probe: self.probe(),
            mode: self.filter_mode,
        }
    }

    pub fn balance_mode(&self) -> BalanceMode {
        if self.per_type_balance {
            BalanceMode::PerNegType
        } else {
            BalanceMode::Global
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text("# curated run\nseed = 9\nk = 40   # more aggressive\nngram-orders = 1,3\n", "run.cfg").unwrap();
        assert_eq!((cfg.seed, cfg.k_percent), (9, 40.0));
        assert_eq!(cfg.featurizer.ngram_orders, BTreeSet::from([1, 3]));
        cfg.apply("k", "10", "--k").unwrap();
        assert_eq!(cfg.k_percent, 10.0);
    }

    #[test]
    fn rejects_bad_input() {
        let mut cfg = PipelineConfig::default();
        assert!(matches!(cfg.apply("folds", "1", "--folds"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(cfg.apply("k", "120", "--k"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(cfg.apply("hash-dim", "1000", "--hash-dim"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(cfg.apply_text("nonsense\n", "f"), Err(ConfigError::Syntax { .. })));
        let err = cfg.apply_text("colour = red\n", "f").unwrap_err();
        assert_eq!(err.to_string(), "f:1: unknown key `colour`");
    }
}
