//! Command-line front end. Every command writes its outputs to files and a
//! JSON summary, including the effective configuration, to stdout.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 transport failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::PipelineConfig;
use crate::corpus::{balance_with, leakage_check, load_corpus, write_corpus, CollisionKind, Corpus, Label};
use crate::debias::{audit_bias, debias_filter, FilterReport, PredictionOverride};
use crate::error::{Error, Result};
use crate::metrics::{
    grouped_correlation, magicbrush_group, oracle_threshold_accuracy, oracle_threshold_balanced_accuracy,
    pair_image_score, roc_auc, winoground_scores, Correlation, MetricError, MetricReport, QuadScores,
};
use crate::neggen::{generate_corpus, GenLogEntry, Generator, Lexicon, LlmSettings, NegStatus};
use crate::scoring::{
    export_train, fetch_logits, load_logits, score_pairs, write_jsonl, ScoreRequest, ScoringError, ScoringSettings,
};
use crate::transport::{FixtureTransport, HttpTransport, RetryPolicy, Transport};

/// Environment variable holding the LLM credential.
pub const API_KEY_ENV: &str = "ALIGN_LLM_API_KEY";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_TRANSPORT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "align-curate", version, about = "Curate hard-negative caption data and evaluate alignment scorers")]
struct Cli {
    /// Flat `key = value` settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Comma-separated n-gram orders, e.g. `1,2`.
    #[arg(long)]
    ngram_orders: Option<String>,
    #[arg(long)]
    hash_dim: Option<u64>,
    #[arg(long)]
    hash_seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    folds: Option<usize>,
    /// Percent of confident correct predictions removed per class and fold.
    #[arg(long)]
    k: Option<f64>,
    /// `joint` or `separate` (one filter per negative type).
    #[arg(long)]
    filter_mode: Option<String>,
}

#[derive(Debug, Args)]
struct LlmArgs {
    /// Chat-completions URL; without it (and without a fixture) the offline
    /// generator is used.
    #[arg(long)]
    endpoint: Option<String>,
    /// Replay recorded LLM responses instead of calling the endpoint.
    #[arg(long)]
    llm_fixture: Option<PathBuf>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long)]
    in_flight: Option<usize>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    /// JSON lexicon for the offline replace generator.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate hard negatives for every positive caption.
    GenNeg {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// `replace`, `swap` or `both`.
        #[arg(long)]
        strategy: Option<String>,
        /// Generation log; defaults to `<output stem>.log.jsonl`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Subsample the majority label so both labels have equal counts.
    Balance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Balance positives against each negative type separately.
        #[arg(long)]
        per_type: bool,
    },
    /// Remove captions whose label a text-only probe predicts confidently.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Per-fold JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
        /// JSONL `{record_id, p_negative}` used instead of training probes.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        probe: ProbeArgs,
    },
    /// Held-out accuracy of a fresh text-only probe.
    Audit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Accuracy (percent) above which the corpus is flagged.
        #[arg(long)]
        audit_threshold: Option<f64>,
        #[command(flatten)]
        probe: ProbeArgs,
    },
    /// Turn Yes/No logits into alignment scores.
    Score {
        /// Precomputed logits JSONL `{pair_id, yes_logit, no_logit}`.
        #[arg(long, conflicts_with = "input")]
        logits: Option<PathBuf>,
        /// Pairs JSONL `{pair_id, image_ref, caption}` to send to the endpoint.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        score_fixture: Option<PathBuf>,
        #[arg(long)]
        in_flight: Option<usize>,
        #[arg(long)]
        max_retries: Option<u32>,
        #[arg(long)]
        timeout: Option<u64>,
    },
    /// Compute one evaluation metric over a JSONL file.
    Eval {
        #[arg(long)]
        input: PathBuf,
        /// roc_auc, oracle_accuracy, spearman, kendall, winoground,
        /// magicbrush or pair_image.
        #[arg(long)]
        metric: String,
        /// `pooled` or `per-group` (correlations only).
        #[arg(long)]
        aggregation: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write (image, prompt, Yes/No) fine-tuning examples.
    ExportTrain {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Report train/test collisions on captions or images.
    LeakCheck {
        /// Training corpus.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// gen-neg, balance, filter, audit and export-train in one run.
    Pipeline {
        /// Positive captions.
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        per_type: bool,
        #[arg(long)]
        audit_threshold: Option<f64>,
        #[command(flatten)]
        llm: LlmArgs,
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        probe: ProbeArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenNeg { .. } => "gen-neg",
            Command::Balance { .. } => "balance",
            Command::Filter { .. } => "filter",
            Command::Audit { .. } => "audit",
            Command::Score { .. } => "score",
            Command::Eval { .. } => "eval",
            Command::ExportTrain { .. } => "export-train",
            Command::LeakCheck { .. } => "leak-check",
            Command::Pipeline { .. } => "pipeline",
        }
    }
}

type Overrides = Vec<(&'static str, String)>;

fn push<T: ToString>(out: &mut Overrides, key: &'static str, value: &Option<T>) {
    if let Some(v) = value {
        out.push((key, v.to_string()));
    }
}

impl ProbeArgs {
    fn overrides(&self, out: &mut Overrides) {
        push(out, "ngram-orders", &self.ngram_orders);
        push(out, "hash-dim", &self.hash_dim);
        push(out, "hash-seed", &self.hash_seed);
        push(out, "lr", &self.lr);
        push(out, "epochs", &self.epochs);
        push(out, "l2", &self.l2);
    }
}

impl FilterArgs {
    fn overrides(&self, out: &mut Overrides) {
        push(out, "folds", &self.folds);
        push(out, "k", &self.k);
        push(out, "filter-mode", &self.filter_mode);
    }
}

impl LlmArgs {
    fn overrides(&self, out: &mut Overrides) {
        push(out, "llm-endpoint", &self.endpoint);
        push(out, "llm-fixture", &self.llm_fixture.as_ref().map(|p| p.display().to_string()));
        push(out, "llm-model", &self.llm_model);
        push(out, "in-flight", &self.in_flight);
        push(out, "max-retries", &self.max_retries);
        push(out, "timeout", &self.timeout);
    }
}

fn overrides(cli: &Cli) -> Overrides {
    let mut out = Vec::new();
    push(&mut out, "seed", &cli.seed);
    match &cli.command {
        Command::GenNeg { strategy, llm, .. } => {
            push(&mut out, "strategy", strategy);
            llm.overrides(&mut out);
        }
        Command::Balance { per_type, .. } => {
            if *per_type {
                out.push(("per-type-balance", "true".into()));
            }
        }
        Command::Filter { filter, probe, .. } => {
            filter.overrides(&mut out);
            probe.overrides(&mut out);
        }
        Command::Audit { audit_threshold, probe, .. } => {
            push(&mut out, "audit-threshold", audit_threshold);
            probe.overrides(&mut out);
        }
        Command::Score { endpoint, score_fixture, in_flight, max_retries, timeout, .. } => {
            push(&mut out, "score-endpoint", endpoint);
            push(&mut out, "score-fixture", &score_fixture.as_ref().map(|p| p.display().to_string()));
            push(&mut out, "in-flight", in_flight);
            push(&mut out, "max-retries", max_retries);
            push(&mut out, "timeout", timeout);
        }
        Command::Eval { aggregation, .. } => push(&mut out, "aggregation", aggregation),
        Command::ExportTrain { .. } | Command::LeakCheck { .. } => {}
        Command::Pipeline { strategy, per_type, audit_threshold, llm, filter, probe, .. } => {
            push(&mut out, "strategy", strategy);
            if *per_type {
                out.push(("per-type-balance", "true".into()));
            }
            push(&mut out, "audit-threshold", audit_threshold);
            llm.overrides(&mut out);
            filter.overrides(&mut out);
            probe.overrides(&mut out);
        }
    }
    out
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for (key, value) in overrides(cli) {
        cfg.apply(key, &value, &format!("--{key}"))?;
    }
    Ok(cfg)
}

/// Outcome of a command: summary fields plus the exit code.
struct Outcome {
    fields: Map<String, Value>,
    code: i32,
}

impl Outcome {
    fn ok(fields: Value) -> Self {
        Outcome { fields: into_map(fields), code: EXIT_OK }
    }
}

fn into_map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        other => Map::from_iter([("result".to_string(), other)]),
    }
}

fn to_value<S: Serialize>(s: &S) -> Value {
    serde_json::to_value(s).expect("summary types serialize")
}

fn write_json<S: Serialize>(value: &S, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn retry(cfg: &PipelineConfig) -> RetryPolicy {
    RetryPolicy { max_retries: cfg.max_retries, ..RetryPolicy::default() }
}

/// Fixture replay wins over a live endpoint.
fn llm_transport(cfg: &PipelineConfig) -> Result<Option<Box<dyn Transport>>> {
    if let Some(path) = &cfg.llm_fixture {
        return Ok(Some(Box::new(FixtureTransport::load(path)?)));
    }
    Ok(cfg.llm_endpoint.as_ref().map(|url| {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Box::new(HttpTransport::new(url.clone(), key, retry(cfg), Duration::from_secs(cfg.timeout_secs)))
            as Box<dyn Transport>
    }))
}

fn score_transport(cfg: &PipelineConfig) -> Result<Box<dyn Transport>> {
    if let Some(path) = &cfg.score_fixture {
        return Ok(Box::new(FixtureTransport::load(path)?));
    }
    match &cfg.score_endpoint {
        Some(url) => {
            Ok(Box::new(HttpTransport::new(url.clone(), None, retry(cfg), Duration::from_secs(cfg.timeout_secs))))
        }
        None => Err(Error::Invalid("score needs --logits, or --input with --endpoint or --score-fixture".into())),
    }
}

fn default_log_path(output: &Path) -> PathBuf {
    output.with_extension("log.jsonl")
}

struct GenOutcome {
    corpus: Corpus,
    log: Vec<GenLogEntry>,
    status_counts: BTreeMap<String, usize>,
    generator: &'static str,
}

fn generate(input: &Corpus, cfg: &PipelineConfig, lexicon: Option<&Path>) -> Result<GenOutcome> {
    let lexicon = match lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::builtin(),
    };
    let transport = llm_transport(cfg)?;
    let generator = match &transport {
        Some(t) => Generator::Llm {
            transport: t.as_ref(),
            settings: LlmSettings { model: cfg.llm_model.clone(), in_flight: cfg.in_flight, ..LlmSettings::default() },
        },
        None => Generator::Fallback { lexicon: &lexicon, seed: cfg.seed },
    };
    let (corpus, log) = generate_corpus(input, &cfg.strategy.strategies(), &generator)?;
    let mut status_counts = BTreeMap::new();
    for e in &log {
        *status_counts.entry(to_value(&e.result.status).as_str().unwrap_or_default().to_string()).or_insert(0) += 1;
    }
    Ok(GenOutcome { corpus, log, status_counts, generator: generator.name() })
}

fn transport_failures(log: &[GenLogEntry]) -> usize {
    log.iter().filter(|e| e.result.status == NegStatus::TransportError).count()
}

fn label_counts(c: &Corpus) -> Value {
    json!({"positive": c.count(Label::Positive), "negative": c.count(Label::Negative)})
}

fn cmd_gen_neg(
    input: &Path,
    output: &Path,
    log_path: Option<&Path>,
    lexicon: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<Outcome> {
    let source = load_corpus(input)?;
    let gen = generate(&source, cfg, lexicon)?;
    write_corpus(&gen.corpus, output)?;
    let log_path = log_path.map(Path::to_path_buf).unwrap_or_else(|| default_log_path(output));
    write_jsonl(&gen.log, &log_path)?;
    let failures = transport_failures(&gen.log);
    let mut out = Outcome::ok(json!({
        "output": output.display().to_string(),
        "log": log_path.display().to_string(),
        "generator": gen.generator,
        "records": gen.corpus.len(),
        "labels": label_counts(&gen.corpus),
        "attempts": gen.status_counts,
    }));
    if failures > 0 {
        out.code = EXIT_TRANSPORT;
        out.fields.insert("status".into(), "transport_error".into());
    }
    Ok(out)
}

fn cmd_balance(input: &Path, output: &Path, cfg: &PipelineConfig) -> Result<Outcome> {
    let corpus = load_corpus(input)?;
    let balanced = balance_with(&corpus, cfg.seed, cfg.balance_mode())?;
    write_corpus(&balanced, output)?;
    Ok(Outcome::ok(json!({
        "output": output.display().to_string(),
        "input_labels": label_counts(&corpus),
        "labels": label_counts(&balanced),
    })))
}

fn filter_summary(report: &FilterReport) -> Value {
    json!({
        "retained": report.retained_count,
        "removed": report.removed_count,
        "folds": report.per_fold.iter().map(|f| json!({
            "group": f.group,
            "fold": f.fold,
            "probe_accuracy": f.probe_accuracy,
            "removed": f.removed.len(),
        })).collect::<Vec<_>>(),
    })
}

fn cmd_filter(
    input: &Path,
    output: &Path,
    report_path: Option<&Path>,
    predictions: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<Outcome> {
    let corpus = load_corpus(input)?;
    let overrides = predictions.map(PredictionOverride::load).transpose()?;
    let (filtered, report) = debias_filter(&corpus, &cfg.filter_options(), overrides.as_ref())?;
    write_corpus(&filtered, output)?;
    if let Some(p) = report_path {
        write_json(&report, p)?;
    }
    let mut fields = into_map(filter_summary(&report));
    fields.insert("output".into(), output.display().to_string().into());
    fields.insert("labels".into(), label_counts(&filtered));
    Ok(Outcome { fields, code: EXIT_OK })
}

fn audit_value(corpus: &Corpus, cfg: &PipelineConfig) -> Result<Value> {
    let result = audit_bias(corpus, cfg.seed, &cfg.probe())?;
    let flagged = result.accuracy * 100.0 > cfg.audit_threshold;
    Ok(json!({
        "accuracy": result.accuracy,
        "train_size": result.train_size,
        "test_size": result.test_size,
        "threshold_percent": cfg.audit_threshold,
        "above_threshold": flagged,
    }))
}

fn cmd_audit(input: &Path, output: Option<&Path>, cfg: &PipelineConfig, stderr: &mut dyn Write) -> Result<Outcome> {
    let corpus = load_corpus(input)?;
    let mut audit = audit_value(&corpus, cfg)?;
    if audit["above_threshold"] == Value::Bool(true) {
        let warning = format!(
            "text-only probe accuracy {:.3} exceeds {}%; captions still reveal labels",
            audit["accuracy"].as_f64().unwrap_or_default(),
            cfg.audit_threshold
        );
        let _ = writeln!(stderr, "warning: {warning}");
        audit["warning"] = warning.into();
    }
    if let Some(p) = output {
        write_json(&audit, p)?;
    }
    Ok(Outcome::ok(audit))
}

fn read_jsonl_values(path: &Path) -> Result<Vec<(usize, Value)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value =
            serde_json::from_str(line).map_err(|e| Error::Invalid(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push((i + 1, v));
    }
    Ok(out)
}

fn cmd_score(logits: Option<&Path>, input: Option<&Path>, output: &Path, cfg: &PipelineConfig) -> Result<Outcome> {
    let (pairs, source) = match (logits, input) {
        (Some(path), _) => (load_logits(path)?, "logits"),
        (None, Some(path)) => {
            let mut reqs = Vec::new();
            for (line, v) in read_jsonl_values(path)? {
                let req: ScoreRequest =
                    serde_json::from_value(v).map_err(|e| ScoringError::Parse { line, message: e.to_string() })?;
                reqs.push(req);
            }
            let transport = score_transport(cfg)?;
            (fetch_logits(transport.as_ref(), &reqs, &ScoringSettings { in_flight: cfg.in_flight })?, "endpoint")
        }
        (None, None) => return Err(Error::Invalid("score needs --logits or --input".into())),
    };
    let scored = score_pairs(&pairs)?;
    write_jsonl(&scored, output)?;
    Ok(Outcome::ok(json!({
        "output": output.display().to_string(),
        "source": source,
        "pairs": scored.len(),
    })))
}

fn field_f64(v: &Value, key: &str, line: usize) -> Result<f64> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Invalid(format!("line {line}: missing or non-numeric `{key}`")))
}

/// `true` for a matching (positive) pair.
fn field_label(v: &Value, line: usize) -> Result<bool> {
    let bad = || Error::Invalid(format!("line {line}: `label` must be positive/negative, true/false or 1/0"));
    match v.get("label").ok_or_else(bad)? {
        Value::Bool(b) => Ok(*b),
        Value::Number(n) => match n.as_f64() {
            Some(1.0) => Ok(true),
            Some(0.0) => Ok(false),
            _ => Err(bad()),
        },
        Value::String(s) => match s.as_str() {
            "positive" | "pos" => Ok(true),
            "negative" | "neg" => Ok(false),
            _ => Err(bad()),
        },
        _ => Err(bad()),
    }
}

fn quad(v: &Value, line: usize) -> Result<QuadScores> {
    Ok(QuadScores::new(
        field_f64(v, "s00", line)?,
        field_f64(v, "s01", line)?,
        field_f64(v, "s10", line)?,
        field_f64(v, "s11", line)?,
    ))
}

fn mean(xs: impl Iterator<Item = bool>) -> (f64, usize) {
    let (mut hits, mut n) = (0usize, 0usize);
    for x in xs {
        hits += x as usize;
        n += 1;
    }
    (if n == 0 { f64::NAN } else { hits as f64 / n as f64 }, n)
}

/// Evaluates `metric` over already-parsed JSONL rows.
pub fn evaluate(metric: &str, rows: &[(usize, Value)], cfg: &PipelineConfig) -> Result<MetricReport> {
    if rows.is_empty() {
        return Err(MetricError::TooFew { need: 1, got: 0 }.into());
    }
    let report = match metric {
        "roc_auc" | "oracle_accuracy" => {
            let mut scores = Vec::with_capacity(rows.len());
            let mut labels = Vec::with_capacity(rows.len());
            for (line, v) in rows {
                scores.push(field_f64(v, "score", *line)?);
                labels.push(field_label(v, *line)?);
            }
            if metric == "roc_auc" {
                MetricReport::new(metric, roc_auc(&scores, &labels)?, rows.len())
            } else {
                let pooled = oracle_threshold_accuracy(&scores, &labels)?;
                let balanced = oracle_threshold_balanced_accuracy(&scores, &labels)?;
                MetricReport::new(metric, pooled.accuracy, rows.len())
                    .with("threshold", pooled.threshold)
                    .with("balanced_accuracy", balanced.accuracy)
                    .with("balanced_threshold", balanced.threshold)
            }
        }
        "spearman" | "kendall" => {
            let method = if metric == "spearman" { Correlation::Spearman } else { Correlation::Kendall };
            let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for (line, v) in rows {
                let key = match v.get("group") {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => s.clone(),
                    Some(other) => other.to_string(),
                };
                let g = groups.entry(key).or_default();
                g.0.push(field_f64(v, "score", *line)?);
                g.1.push(field_f64(v, "human", *line)?);
            }
            let groups: Vec<_> = groups.into_values().collect();
            let (value, used) = grouped_correlation(&groups, method, cfg.aggregation)?;
            MetricReport::new(metric, value, rows.len())
                .with("aggregation", to_value(&cfg.aggregation))
                .with("averaged_over", used)
        }
        "winoground" => {
            let quads = rows.iter().map(|(l, v)| quad(v, *l)).collect::<Result<Vec<_>>>()?;
            let outcomes: Vec<_> = quads.iter().map(winoground_scores).collect();
            let (text, n) = mean(outcomes.iter().map(|o| o.text));
            let (image, _) = mean(outcomes.iter().map(|o| o.image));
            let (group, _) = mean(outcomes.iter().map(|o| o.group));
            MetricReport::new(metric, group, n).with("text", text).with("image", image).with("group", group)
        }
        "magicbrush" => {
            let quads = rows.iter().map(|(l, v)| quad(v, *l)).collect::<Result<Vec<_>>>()?;
            let outcomes: Vec<_> = quads.iter().map(magicbrush_group).collect();
            let (f, n) = mean(outcomes.iter().map(|o| o.f));
            let (g, _) = mean(outcomes.iter().map(|o| o.g));
            let (h, _) = mean(outcomes.iter().map(|o| o.h));
            MetricReport::new(metric, h, n).with("f", f).with("g", g).with("h", h)
        }
        "pair_image" => {
            let mut hits = Vec::with_capacity(rows.len());
            for (line, v) in rows {
                hits.push(pair_image_score(field_f64(v, "s_pos", *line)?, field_f64(v, "s_neg", *line)?) == 1);
            }
            let (value, n) = mean(hits.into_iter());
            MetricReport::new(metric, value, n)
        }
        other => return Err(MetricError::UnknownMetric(other.to_string()).into()),
    };
    Ok(report)
}

fn cmd_eval(input: &Path, metric: &str, output: Option<&Path>, cfg: &PipelineConfig) -> Result<Outcome> {
    let rows = read_jsonl_values(input)?;
    let report = evaluate(metric, &rows, cfg)?;
    if let Some(p) = output {
        write_json(&report, p)?;
    }
    Ok(Outcome::ok(json!({"metric": to_value(&report)})))
}

fn cmd_export(input: &Path, output: &Path) -> Result<Outcome> {
    let corpus = load_corpus(input)?;
    let n = export_train(&corpus, output)?;
    Ok(Outcome::ok(json!({"output": output.display().to_string(), "examples": n})))
}

fn cmd_leak_check(train: &Path, test: &Path, output: Option<&Path>) -> Result<Outcome> {
    let report = leakage_check(&load_corpus(train)?, &load_corpus(test)?);
    if let Some(p) = output {
        write_json(&report, p)?;
    }
    Ok(Outcome {
        fields: into_map(json!({
            "clean": report.is_clean(),
            "caption_collisions": report.count(CollisionKind::Caption),
            "image_collisions": report.count(CollisionKind::Image),
            "collisions": to_value(&report.collisions),
        })),
        code: if report.is_clean() { EXIT_OK } else { EXIT_INVALID },
    })
}

/// File names written by `pipeline`, relative to its output directory.
pub const PIPELINE_FILES: [&str; 8] = [
    "negatives.jsonl",
    "gen_log.jsonl",
    "balanced.jsonl",
    "filtered.jsonl",
    "filter_report.json",
    "audit.json",
    "train.jsonl",
    "summary.json",
];

fn cmd_pipeline(input: &Path, dir: &Path, lexicon: Option<&Path>, cfg: &PipelineConfig) -> Result<Outcome> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let source = load_corpus(input)?;
    let gen = generate(&source, cfg, lexicon)?;
    write_corpus(&gen.corpus, dir.join("negatives.jsonl"))?;
    write_jsonl(&gen.log, dir.join("gen_log.jsonl"))?;
    let failures = transport_failures(&gen.log);

    let balanced = balance_with(&gen.corpus, cfg.seed, cfg.balance_mode())?;
    write_corpus(&balanced, dir.join("balanced.jsonl"))?;

    let (filtered, report) = debias_filter(&balanced, &cfg.filter_options(), None)?;
    write_corpus(&filtered, dir.join("filtered.jsonl"))?;
    write_json(&report, &dir.join("filter_report.json"))?;

    let audit = json!({"before": audit_value(&balanced, cfg)?, "after": audit_value(&filtered, cfg)?});
    write_json(&audit, &dir.join("audit.json"))?;

    let examples = export_train(&filtered, dir.join("train.jsonl"))?;

    let summary = json!({
        "generator": gen.generator,
        "attempts": gen.status_counts,
        "generated": label_counts(&gen.corpus),
        "balanced": label_counts(&balanced),
        "filter": filter_summary(&report),
        "audit": audit,
        "train_examples": examples,
        "files": PIPELINE_FILES,
        "config": to_value(cfg),
    });
    write_json(&summary, &dir.join("summary.json"))?;
    let mut fields = into_map(summary);
    fields.insert("output".into(), dir.display().to_string().into());
    let code = if failures > 0 {
        fields.insert("status".into(), "transport_error".into());
        EXIT_TRANSPORT
    } else {
        EXIT_OK
    };
    Ok(Outcome { fields, code })
}

fn dispatch(cli: &Cli, cfg: &PipelineConfig, stderr: &mut dyn Write) -> Result<Outcome> {
    match &cli.command {
        Command::GenNeg { input, output, log, llm, .. } => {
            cmd_gen_neg(input, output, log.as_deref(), llm.lexicon.as_deref(), cfg)
        }
        Command::Balance { input, output, .. } => cmd_balance(input, output, cfg),
        Command::Filter { input, output, report, predictions, .. } => {
            cmd_filter(input, output, report.as_deref(), predictions.as_deref(), cfg)
        }
        Command::Audit { input, output, .. } => cmd_audit(input, output.as_deref(), cfg, stderr),
        Command::Score { logits, input, output, .. } => cmd_score(logits.as_deref(), input.as_deref(), output, cfg),
        Command::Eval { input, metric, output, .. } => cmd_eval(input, metric, output.as_deref(), cfg),
        Command::ExportTrain { input, output } => cmd_export(input, output),
        Command::LeakCheck { input, test, output } => cmd_leak_check(input, test, output.as_deref()),
        Command::Pipeline { input, output, llm, .. } => cmd_pipeline(input, output, llm.lexicon.as_deref(), cfg),
    }
}

fn emit(stdout: &mut dyn Write, value: &Value) {
    let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK { write!(stdout, "{rendered}") } else { write!(stderr, "{rendered}") };
            return code;
        }
    };
    let command = cli.command.name();
    let cfg = match effective_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            emit(stdout, &json!({"command": command, "status": "error", "error": e.to_string()}));
            return EXIT_INVALID;
        }
    };
    match dispatch(&cli, &cfg, stderr) {
        Ok(outcome) => {
            let mut summary = Map::new();
            summary.insert("command".into(), command.into());
            summary.insert("status".into(), "ok".into());
            for (k, v) in outcome.fields {
                summary.insert(k, v);
            }
            summary.entry("config").or_insert_with(|| to_value(&cfg));
            emit(stdout, &Value::Object(summary));
            outcome.code
        }
        Err(e) => {
            let code = if e.is_transport() { EXIT_TRANSPORT } else { EXIT_INVALID };
            let _ = writeln!(stderr, "error: {e}");
            emit(
                stdout,
                &json!({"command": command, "status": "error", "error": e.to_string(), "config": to_value(&cfg)}),
            );
            code
        }
    }
}
