//! Caption corpora: JSONL loading and writing, validation, balancing and
//! train/test leakage checks.

mod balance;
mod leakage;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use balance::{balance, balance_with, BalanceMode};
pub use leakage::{leakage_check, normalize_caption, Collision, CollisionKind, LeakageReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_negative(self) -> bool {
        self == Label::Negative
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        })
    }
}

/// How a negative caption was derived from its positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegType {
    Replace,
    Swap,
}

impl NegType {
    pub const ALL: [NegType; 2] = [NegType::Replace, NegType::Swap];

    pub fn as_str(self) -> &'static str {
        match self {
            NegType::Replace => "replace",
            NegType::Swap => "swap",
        }
    }
}

impl fmt::Display for NegType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NegType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "replace" => Ok(NegType::Replace),
            "swap" => Ok(NegType::Swap),
            other => Err(format!("unknown negative type `{other}`")),
        }
    }
}

/// One caption paired with an opaque image reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub id: String,
    pub image_ref: String,
    pub text: String,
    pub label: Label,
    pub neg_type: Option<NegType>,
    pub source_id: Option<String>,
    pub fold: Option<i64>,
    /// Fields not in the schema, kept verbatim for round-trips.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl CaptionRecord {
    pub fn positive(id: impl Into<String>, image_ref: impl Into<String>, text: impl Into<String>) -> Self {
        CaptionRecord {
            id: id.into(),
            image_ref: image_ref.into(),
            text: text.into(),
            label: Label::Positive,
            neg_type: None,
            source_id: None,
            fold: None,
            extra: Map::new(),
        }
    }

    pub fn negative(
        id: impl Into<String>,
        image_ref: impl Into<String>,
        text: impl Into<String>,
        neg_type: NegType,
        source_id: impl Into<String>,
    ) -> Self {
        CaptionRecord {
            id: id.into(),
            image_ref: image_ref.into(),
            text: text.into(),
            label: Label::Negative,
            neg_type: Some(neg_type),
            source_id: Some(source_id.into()),
            fold: None,
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed JSON: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: invalid field `{field}`: {reason}")]
    InvalidField { line: usize, field: &'static str, reason: String },
    #[error("duplicate id `{id}` on lines {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },
    #[error("corpus has no {0} records")]
    MissingLabel(Label),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

const REQUIRED: [&str; 4] = ["id", "image_ref", "text", "label"];

/// Ordered caption records plus free-form provenance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub records: Vec<CaptionRecord>,
    pub provenance: BTreeMap<String, String>,
}

impl Corpus {
    /// Builds a corpus from in-memory records, enforcing the record
    /// invariants. Line numbers in errors are 1-based record positions.
    pub fn from_records(records: Vec<CaptionRecord>) -> Result<Self, CorpusError> {
        let mut seen: HashMap<&str, usize> = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            check_record(rec, i + 1)?;
            if let Some(first) = seen.insert(rec.id.as_str(), i + 1) {
                return Err(CorpusError::DuplicateId { id: rec.id.clone(), first, second: i + 1 });
            }
        }
        Ok(Corpus { records, provenance: BTreeMap::new() })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn get(&self, id: &str) -> Option<&CaptionRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Negatives whose `source_id` does not name a positive in this corpus.
    pub fn dangling_sources(&self) -> Vec<(&str, &str)> {
        let positives: HashMap<&str, ()> =
            self.records.iter().filter(|r| r.label == Label::Positive).map(|r| (r.id.as_str(), ())).collect();
        self.records
            .iter()
            .filter_map(|r| {
                let src = r.source_id.as_deref()?;
                (!positives.contains_key(src)).then_some((r.id.as_str(), src))
            })
            .collect()
    }

    /// Keeps records whose index satisfies `keep`, preserving order and
    /// provenance.
    pub fn retain_indices(&self, keep: impl Fn(usize) -> bool) -> Corpus {
        Corpus {
            records: self.records.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, r)| r.clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn require_both_labels(&self) -> Result<(), CorpusError> {
        for label in [Label::Positive, Label::Negative] {
            if self.count(label) == 0 {
                return Err(CorpusError::MissingLabel(label));
            }
        }
        Ok(())
    }
}

fn check_record(rec: &CaptionRecord, line: usize) -> Result<(), CorpusError> {
    if rec.id.is_empty() {
        return Err(CorpusError::InvalidField { line, field: "id", reason: "empty id".into() });
    }
    if rec.text.trim().is_empty() {
        return Err(CorpusError::InvalidField {
            line,
            field: "text",
            reason: "caption is empty after trimming".into(),
        });
    }
    match rec.label {
        Label::Negative => {
            if rec.neg_type.is_none() {
                return Err(CorpusError::MissingField { line, field: "neg_type" });
            }
            if rec.source_id.is_none() {
                return Err(CorpusError::MissingField { line, field: "source_id" });
            }
        }
        Label::Positive => {
            if rec.neg_type.is_some() {
                return Err(CorpusError::InvalidField {
                    line,
                    field: "neg_type",
                    reason: "positive records carry no negative type".into(),
                });
            }
            if rec.source_id.is_some() {
                return Err(CorpusError::InvalidField {
                    line,
                    field: "source_id",
                    reason: "positive records carry no source id".into(),
                });
            }
        }
    }
    Ok(())
}

/// Parses one JSONL line into a record. `line` is only used for errors.
pub fn parse_record(text: &str, line: usize) -> Result<CaptionRecord, CorpusError> {
    let value: Value = serde_json::from_str(text).map_err(|source| CorpusError::Json { line, source })?;
    let Some(obj) = value.as_object() else {
        return Err(CorpusError::InvalidField { line, field: "record", reason: "expected a JSON object".into() });
    };
    for field in REQUIRED {
        if obj.get(field).is_none_or(Value::is_null) {
            return Err(CorpusError::MissingField { line, field });
        }
    }
    let rec: CaptionRecord = serde_json::from_value(value).map_err(|source| CorpusError::Json { line, source })?;
    check_record(&rec, line)?;
    Ok(rec)
}

/// Reads a JSONL corpus. Blank lines are skipped but still counted.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line, line_no)?;
        if let Some(first) = seen.insert(rec.id.clone(), line_no) {
            return Err(CorpusError::DuplicateId { id: rec.id, first, second: line_no });
        }
        records.push(rec);
    }
    let mut corpus = Corpus { records, provenance: BTreeMap::new() };
    corpus.provenance.insert("source".into(), path.display().to_string());
    Ok(corpus)
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    write_records(&corpus.records, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_records<W: Write>(records: &[CaptionRecord], out: &mut W) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut *out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    const POS: &str = r#"{"id":"c1","image_ref":"img_1","text":"a cat on a mat","label":"positive","neg_type":null,"source_id":null,"fold":null}"#;
    const NEG: &str = r#"{"id":"c2","image_ref":"img_1","text":"a dog on a mat","label":"negative","neg_type":"replace","source_id":"c1","fold":null}"#;

    #[test]
    fn loads_valid_file() {
        let f = write_lines(&[POS, NEG]);
        let c = load_corpus(f.path()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.records[1].neg_type, Some(NegType::Replace));
        assert!(c.dangling_sources().is_empty());
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let dup = POS.replace("a cat on a mat", "another caption");
        let filler = |i: usize| {
            format!(
                r#"{{"id":"f{i}","image_ref":"img","text":"t {i}","label":"positive","neg_type":null,"source_id":null,"fold":null}}"#
            )
        };
        let (f1, f2, f4, f5, f6) = (filler(1), filler(2), filler(4), filler(5), filler(6));
        let f = write_lines(&[&f1, &f2, POS, &f4, &f5, &f6, &dup]);
        match load_corpus(f.path()) {
            Err(CorpusError::DuplicateId { id, first, second }) => {
                assert_eq!((id.as_str(), first, second), ("c1", 3, 7));
            }
            other => panic!("expected duplicate id, got {other:?}"),
        }
    }

    #[test]
    fn negative_without_neg_type_is_rejected() {
        let bad = NEG.replace(r#""neg_type":"replace""#, r#""neg_type":null"#);
        let f = write_lines(&[POS, &bad]);
        let err = load_corpus(f.path()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingField { line: 2, field: "neg_type" }), "{err}");
        assert!(err.to_string().contains("neg_type"));
    }

    #[test]
    fn malformed_json_reports_line() {
        let f = write_lines(&[POS, "{not json"]);
        assert!(matches!(load_corpus(f.path()), Err(CorpusError::Json { line: 2, .. })));
    }

    #[test]
    fn missing_required_field() {
        let f = write_lines(&[r#"{"id":"x","text":"hi","label":"positive"}"#]);
        assert!(matches!(load_corpus(f.path()), Err(CorpusError::MissingField { line: 1, field: "image_ref" })));
    }

    #[test]
    fn blank_text_is_rejected() {
        let f = write_lines(&[&POS.replace("a cat on a mat", "   ")]);
        assert!(matches!(load_corpus(f.path()), Err(CorpusError::InvalidField { field: "text", .. })));
    }

    #[test]
    fn dangling_source_is_flagged_not_fatal() {
        let f = write_lines(&[&NEG.replace("\"c1\"", "\"nope\"")]);
        let c = load_corpus(f.path()).unwrap();
        assert_eq!(c.dangling_sources(), vec![("c2", "nope")]);
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let with_extra = POS.replace(r#""fold":null"#, r#""fold":3,"meta":{"k":[1,2]},"zz":"last""#);
        let f = write_lines(&[&with_extra, NEG]);
        let c = load_corpus(f.path()).unwrap();
        assert_eq!(c.records[0].extra.len(), 2);
        let out = tempfile::NamedTempFile::new().unwrap();
        write_corpus(&c, out.path()).unwrap();
        let written = std::fs::read_to_string(out.path()).unwrap();
        assert_eq!(written, format!("{with_extra}\n{NEG}\n"));
        assert_eq!(load_corpus(out.path()).unwrap().records, c.records);
    }
}
