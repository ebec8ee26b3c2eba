//! Document data model and line-delimited record IO.
//!
//! Every stage reads and writes [`Document`] records, one JSON object per
//! line. Unknown metadata keys ride along untouched.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::analyze::DocStats;

/// Language code for documents that have not been identified.
pub const UNDETERMINED: &str = "und";

#[derive(Debug, Error, PartialEq)]
pub enum RecordError {
    #[error("missing or empty field `{0}`")]
    MissingField(String),
    #[error("text is not valid UTF-8 or contains NUL bytes")]
    InvalidUtf8,
    #[error("invalid language code `{0}`")]
    InvalidLanguageCode(String),
    #[error("invalid value for field `{field}`: {msg}")]
    InvalidField { field: String, msg: String },
    #[error("malformed JSON record: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Web,
    Pdf,
    Speech,
    External,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Web => "web",
            Source::Pdf => "pdf",
            Source::Speech => "speech",
            Source::External => "external",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "web" => Some(Source::Web),
            "pdf" => Some(Source::Pdf),
            "speech" => Some(Source::Speech),
            "external" => Some(Source::External),
            _ => None,
        }
    }
}

/// Pipeline stages that leave a verdict on a document, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prepare,
    Clean,
    Lid,
    Analyze,
    Flag,
    Dedup,
    Ppl,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Prepare,
        Stage::Clean,
        Stage::Lid,
        Stage::Analyze,
        Stage::Flag,
        Stage::Dedup,
        Stage::Ppl,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Clean => "clean",
            Stage::Lid => "lid",
            Stage::Analyze => "analyze",
            Stage::Flag => "flag",
            Stage::Dedup => "dedup",
            Stage::Ppl => "ppl",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageVerdict {
    pub stage: Stage,
    pub kept: bool,
    #[serde(default)]
    pub reasons: Vec<String>,
    #[serde(default)]
    pub timestamp: i64,
}

impl StageVerdict {
    pub fn keep(stage: Stage, timestamp: i64) -> Self {
        StageVerdict { stage, kept: true, reasons: Vec::new(), timestamp }
    }

    /// A drop verdict. Panics if `reasons` is empty, since a drop must name
    /// the filter responsible.
    pub fn drop(stage: Stage, reasons: Vec<String>, timestamp: i64) -> Self {
        assert!(!reasons.is_empty(), "drop verdict without a reason");
        StageVerdict { stage, kept: false, reasons, timestamp }
    }

    pub fn drop_one(stage: Stage, reason: &str, timestamp: i64) -> Self {
        Self::drop(stage, vec![reason.to_string()], timestamp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source: Source,
    pub language: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<DocStats>,
    #[serde(default)]
    pub verdicts: Vec<StageVerdict>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, source: Source, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            source,
            language: UNDETERMINED.to_string(),
            text: text.into(),
            url: None,
            metadata: BTreeMap::new(),
            stats: None,
            verdicts: Vec::new(),
        }
    }

    /// Appends a verdict, keeping the one-per-stage, pipeline-ordered invariant.
    /// Re-running a stage replaces that stage's verdict and anything recorded
    /// after it.
    pub fn record(&mut self, verdict: StageVerdict) {
        self.verdicts.retain(|v| v.stage < verdict.stage);
        self.verdicts.push(verdict);
    }

    pub fn verdict(&self, stage: Stage) -> Option<&StageVerdict> {
        self.verdicts.iter().find(|v| v.stage == stage)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("documents always serialize")
    }
}

/// `true` for a lowercase three-letter ISO 639-3 code or the `und` sentinel.
pub fn is_valid_language(code: &str) -> bool {
    if code == UNDETERMINED {
        return true;
    }
    code.len() == 3
        && code.bytes().all(|b| b.is_ascii_lowercase())
        && isolang::Language::from_639_3(code).is_some()
}

fn required_str<'a>(raw: &'a Map<String, Value>, field: &str) -> Result<&'a str, RecordError> {
    match raw.get(field) {
        Some(Value::String(s)) if !s.is_empty() => Ok(s),
        Some(Value::String(_)) | None | Some(Value::Null) => {
            Err(RecordError::MissingField(field.to_string()))
        }
        Some(other) => Err(RecordError::InvalidField {
            field: field.to_string(),
            msg: format!("expected string, got {other}"),
        }),
    }
}

/// Validates one parsed record into a [`Document`].
///
/// `source` defaults to `external` and `language` to `und` when absent;
/// `doc_id` and `text` are required.
pub fn validate_document(raw: &Map<String, Value>) -> Result<Document, RecordError> {
    let doc_id = required_str(raw, "doc_id")?.to_string();

    let source = match raw.get("source") {
        None | Some(Value::Null) => Source::External,
        Some(Value::String(s)) => Source::parse(s).ok_or_else(|| RecordError::InvalidField {
            field: "source".into(),
            msg: format!("unknown source `{s}`"),
        })?,
        Some(other) => {
            return Err(RecordError::InvalidField {
                field: "source".into(),
                msg: format!("expected string, got {other}"),
            })
        }
    };

    let language = match raw.get("language") {
        None | Some(Value::Null) => UNDETERMINED.to_string(),
        Some(Value::String(s)) if is_valid_language(s) => s.clone(),
        Some(Value::String(s)) => return Err(RecordError::InvalidLanguageCode(s.clone())),
        Some(other) => return Err(RecordError::InvalidLanguageCode(other.to_string())),
    };

    let text = match raw.get("text") {
        Some(Value::String(s)) => s.clone(),
        _ => return Err(RecordError::MissingField("text".into())),
    };
    if text.contains('\0') {
        return Err(RecordError::InvalidUtf8);
    }

    let url = match raw.get("url") {
        Some(Value::String(s)) => Some(s.clone()),
        _ => None,
    };

    let mut metadata = BTreeMap::new();
    if let Some(Value::Object(m)) = raw.get("metadata") {
        for (k, v) in m {
            let v = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            metadata.insert(k.clone(), v);
        }
    }

    let stats = match raw.get("stats") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value(v.clone()).map_err(|e| {
            RecordError::InvalidField { field: "stats".into(), msg: e.to_string() }
        })?),
    };
    let verdicts = match raw.get("verdicts") {
        None | Some(Value::Null) => Vec::new(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| RecordError::InvalidField {
            field: "verdicts".into(),
            msg: e.to_string(),
        })?,
    };

    Ok(Document { doc_id, source, language, text, url, metadata, stats, verdicts })
}

/// Parses a single JSONL line.
pub fn parse_line(line: &str) -> Result<Document, RecordError> {
    let value: Value = serde_json::from_str(line).map_err(|e| RecordError::Json(e.to_string()))?;
    match value {
        Value::Object(map) => validate_document(&map),
        _ => Err(RecordError::Json("record is not a JSON object".into())),
    }
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("line {line}: {source}")]
    Record { line: usize, source: RecordError },
    #[error("line {line}: invalid UTF-8")]
    Utf8 { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads every document from a JSONL stream. Blank lines are skipped.
pub fn read_documents<R: BufRead>(reader: R) -> Result<Vec<Document>, ReadError> {
    let mut docs = Vec::new();
    for (i, line) in reader.split(b'\n').enumerate() {
        let line = line?;
        let line = std::str::from_utf8(&line).map_err(|_| ReadError::Utf8 { line: i + 1 })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        docs.push(parse_line(line).map_err(|source| ReadError::Record { line: i + 1, source })?);
    }
    Ok(docs)
}

pub fn write_documents<'a, W, I>(mut writer: W, docs: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Document>,
{
    for doc in docs {
        writer.write_all(doc.to_json_line().as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn minimal_record() {
        let doc = validate_document(&obj(json!({
            "doc_id": "a1", "source": "web", "language": "hin", "text": "नमस्ते"
        })))
        .unwrap();
        assert_eq!(doc.doc_id, "a1");
        assert_eq!(doc.source, Source::Web);
        assert_eq!(doc.language, "hin");
        assert_eq!(doc.text, "नमस्ते");
    }

    #[test]
    fn empty_id_is_missing() {
        let err = validate_document(&obj(json!({"doc_id": "", "text": "x"}))).unwrap_err();
        assert_eq!(err, RecordError::MissingField("doc_id".into()));
    }

    #[test]
    fn bad_language_code() {
        let err = validate_document(&obj(json!({
            "doc_id": "a2", "language": "hindi", "text": "x"
        })))
        .unwrap_err();
        assert_eq!(err, RecordError::InvalidLanguageCode("hindi".into()));
        // Three letters but not in the code table.
        assert!(!is_valid_language("zzq"));
        assert!(!is_valid_language("HIN"));
        assert!(is_valid_language("und"));
        assert!(is_valid_language("tam"));
    }

    #[test]
    fn nul_bytes_rejected() {
        let err = validate_document(&obj(json!({"doc_id": "a", "text": "a\u{0}b"}))).unwrap_err();
        assert_eq!(err, RecordError::InvalidUtf8);
    }

    #[test]
    fn unknown_metadata_preserved() {
        let line = r#"{"doc_id":"x","text":"t","metadata":{"crawl":"cc-2023","n":3}}"#;
        let doc = parse_line(line).unwrap();
        assert_eq!(doc.metadata["crawl"], "cc-2023");
        assert_eq!(doc.metadata["n"], "3");
        let again = parse_line(&doc.to_json_line()).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn record_keeps_pipeline_order() {
        let mut doc = Document::new("d", Source::Web, "t");
        doc.record(StageVerdict::keep(Stage::Clean, 0));
        doc.record(StageVerdict::keep(Stage::Lid, 0));
        doc.record(StageVerdict::keep(Stage::Clean, 5));
        assert_eq!(doc.verdicts.len(), 1);
        assert_eq!(doc.verdicts[0].timestamp, 5);
    }

    #[test]
    fn invalid_utf8_line() {
        let bytes: &[u8] = b"{\"doc_id\":\"a\",\"text\":\"\xff\"}\n";
        assert!(matches!(read_documents(bytes), Err(ReadError::Utf8 { line: 1 })));
    }
}
