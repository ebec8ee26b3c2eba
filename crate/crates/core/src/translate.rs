//! Structure-preserving translation: templating, a global sentence table,
//! batched translation and replacement.
//!
//! A document is cut into literal pieces (markdown markers, code, URLs,
//! whitespace) and sentence slots. Rendering the pieces with the original
//! sentences gives back the input byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::provider::{JsonlProcess, ProviderError};

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("no translation for sentence `{0}`")]
    MissingTranslation(String),
    #[error("translator returned {got} results for {expected} inputs")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Piece {
    Literal(String),
    /// Index into `Skeleton::sentences` and `Skeleton::placeholder_order`.
    Slot(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skeleton {
    pub doc_id: String,
    pub pieces: Vec<Piece>,
    /// Sentence id of each slot, in slot order.
    pub placeholder_order: Vec<String>,
    /// Original bytes of each slot.
    pub sentences: Vec<String>,
}

const SLOT_OPEN: char = '\u{E000}';
const SLOT_CLOSE: char = '\u{E001}';

/// NFC form used to key the sentence table.
pub fn sentence_key(s: &str) -> String {
    s.nfc().collect()
}

/// First 16 hex digits of the SHA-256 of the sentence key.
pub fn sentence_id(s: &str) -> String {
    hex::encode(&Sha256::digest(sentence_key(s).as_bytes())[..8])
}

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[ \t]*(```|~~~)").unwrap());
static LINE_PREFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?:[ \t]+|>[ \t]?|#{1,6}(?:[ \t]+|$)|[-*+][ \t]+|\[[ xX]\][ \t]+|\d{1,9}[.)](?:[ \t]+|$)|(?i:[ivxlcdm]{1,8})[.)][ \t]+)",
    )
    .unwrap()
});
static INLINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?:https?|ftp)://[^\s<>()\[\]]+|www\.[^\s<>()\[\]]+|<[A-Za-z/!][^<>]*>|\]\([^)\s]*\)|\*\*|__|~~|\*|!\[|\[|\]|\|",
    )
    .unwrap()
});

/// Sentence-final characters.
fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '।' | '॥')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | '”' | '’' | '»')
}

struct Builder<'a> {
    pieces: Vec<Piece>,
    sentences: Vec<&'a str>,
}

impl<'a> Builder<'a> {
    fn literal(&mut self, s: &str) {
        if s.is_empty() {
            return;
        }
        if let Some(Piece::Literal(prev)) = self.pieces.last_mut() {
            prev.push_str(s);
        } else {
            self.pieces.push(Piece::Literal(s.to_string()));
        }
    }

    fn sentence(&mut self, s: &'a str) {
        self.pieces.push(Piece::Slot(self.sentences.len()));
        self.sentences.push(s);
    }

    /// Splits free text into sentences; surrounding whitespace and
    /// letterless runs stay literal.
    fn text_run(&mut self, run: &'a str) {
        let mut start = 0;
        let chars: Vec<(usize, char)> = run.char_indices().collect();
        let mut i = 0;
        while i < chars.len() {
            if is_terminal(chars[i].1) {
                let mut j = i + 1;
                while j < chars.len() && (is_terminal(chars[j].1) || is_closer(chars[j].1)) {
                    j += 1;
                }
                if j == chars.len() || chars[j].1.is_whitespace() {
                    let end = if j == chars.len() { run.len() } else { chars[j].0 };
                    self.segment(&run[start..end]);
                    start = end;
                }
                i = j;
            } else {
                i += 1;
            }
        }
        self.segment(&run[start..]);
    }

    fn segment(&mut self, seg: &'a str) {
        let trimmed = seg.trim();
        if trimmed.is_empty() || !trimmed.chars().any(char::is_alphabetic) {
            self.literal(seg);
            return;
        }
        let lead = seg.len() - seg.trim_start().len();
        self.literal(&seg[..lead]);
        self.sentence(trimmed);
        self.literal(&seg[lead + trimmed.len()..]);
    }

    /// Handles one line's content after its structural prefix.
    fn inline(&mut self, line: &'a str) {
        let mut pos = 0;
        let mut text_start = 0;
        while pos < line.len() {
            let rest = &line[pos..];
            if rest.starts_with('`') {
                let ticks = rest.len() - rest.trim_start_matches('`').len();
                let fence = &rest[..ticks];
                let after = &rest[ticks..];
                let span_len = find_closing_ticks(after, ticks).map_or(ticks, |k| ticks + k + fence.len());
                self.text_run(&line[text_start..pos]);
                self.literal(&line[pos..pos + span_len]);
                pos += span_len;
                text_start = pos;
                continue;
            }
            if let Some(m) = INLINE.find(rest).filter(|m| m.start() == 0) {
                self.text_run(&line[text_start..pos]);
                self.literal(m.as_str());
                pos += m.end();
                text_start = pos;
                continue;
            }
            pos += rest.chars().next().map_or(1, char::len_utf8);
        }
        self.text_run(&line[text_start..]);
    }
}

/// Offset of a run of exactly `n` backticks in `s`, if any.
fn find_closing_ticks(s: &str, n: usize) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'`' {
            let mut j = i;
            while j < bytes.len() && bytes[j] == b'`' {
                j += 1;
            }
            if j - i == n {
                return Some(i);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    None
}

/// Cuts a document into literal structure and sentence slots.
pub fn template(doc_id: &str, text: &str) -> Skeleton {
    let mut b = Builder { pieces: Vec::new(), sentences: Vec::new() };
    let mut in_fence = false;
    for line in text.split_inclusive('\n') {
        let (body, newline) = match line.strip_suffix('\n') {
            Some(body) => (body, "\n"),
            None => (line, ""),
        };
        let (body, cr) = match body.strip_suffix('\r') {
            Some(body) => (body, "\r"),
            None => (body, ""),
        };
        if FENCE.is_match(body) {
            in_fence = !in_fence;
            b.literal(line);
            continue;
        }
        if in_fence {
            b.literal(line);
            continue;
        }
        let mut content = body;
        while let Some(m) = LINE_PREFIX.find(content) {
            if m.end() == 0 {
                break;
            }
            b.literal(m.as_str());
            content = &content[m.end()..];
        }
        b.inline(content);
        b.literal(cr);
        b.literal(newline);
    }
    let placeholder_order = b.sentences.iter().map(|s| sentence_id(s)).collect();
    Skeleton {
        doc_id: doc_id.to_string(),
        pieces: b.pieces,
        placeholder_order,
        sentences: b.sentences.into_iter().map(str::to_string).collect(),
    }
}

impl Skeleton {
    /// Template text with private-use sentinels around slot numbers.
    pub fn template_string(&self) -> String {
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(i) => out.push_str(&format!("{SLOT_OPEN}{}{SLOT_CLOSE}", i + 1)),
            }
        }
        out
    }

    /// Identity rendering.
    pub fn render_original(&self) -> String {
        self.render_with(|i| Ok(self.sentences[i].clone())).expect("identity rendering")
    }

    fn render_with(&self, mut f: impl FnMut(usize) -> Result<String, TranslateError>) -> Result<String, TranslateError> {
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(i) => out.push_str(&f(*i)?),
            }
        }
        Ok(out)
    }
}

/// Substitutes every slot by its translation. A translation equal to the
/// sentence's normalized key keeps the original bytes, so an identity
/// translation reproduces the document exactly.
pub fn replace(skeleton: &Skeleton, translations: &HashMap<String, String>) -> Result<String, TranslateError> {
    skeleton.render_with(|i| {
        let id = &skeleton.placeholder_order[i];
        let t = translations.get(id).ok_or_else(|| TranslateError::MissingTranslation(id.clone()))?;
        let original = &skeleton.sentences[i];
        if *t == sentence_key(original) {
            Ok(original.clone())
        } else {
            Ok(t.clone())
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub source_text: String,
    pub normalized_key: String,
    /// `(doc_id, slot)` pairs, sorted.
    pub occurrences: Vec<(String, usize)>,
}

/// Deduplicated sentences keyed by sentence id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SentenceTable {
    pub entries: BTreeMap<String, TableEntry>,
}

impl SentenceTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn merge(mut self, other: SentenceTable) -> SentenceTable {
        for (id, e) in other.entries {
            match self.entries.get_mut(&id) {
                Some(mine) => {
                    mine.occurrences.extend(e.occurrences);
                    mine.occurrences.sort();
                    mine.occurrences.dedup();
                }
                None => {
                    self.entries.insert(id, e);
                }
            }
        }
        self
    }

    /// Writes `{sentence_id, source_text}` lines.
    pub fn export<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (id, e) in &self.entries {
            let line = serde_json::json!({ "sentence_id": id, "source_text": e.source_text });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

pub fn build_table(skeletons: &[Skeleton]) -> SentenceTable {
    let mut table = SentenceTable::default();
    for sk in skeletons {
        let mut part = SentenceTable::default();
        for (slot, (id, s)) in sk.placeholder_order.iter().zip(&sk.sentences).enumerate() {
            let key = sentence_key(s);
            part.entries
                .entry(id.clone())
                .or_insert_with(|| TableEntry { source_text: key.clone(), normalized_key: key, occurrences: Vec::new() })
                .occurrences
                .push((sk.doc_id.clone(), slot));
        }
        table = table.merge(part);
    }
    table
}

/// Reads `{sentence_id, translation}` lines.
pub fn read_translations<R: BufRead>(r: R) -> Result<HashMap<String, String>, TranslateError> {
    let mut out = HashMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |msg: String| TranslateError::Parse { line: i + 1, msg };
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        let field = |f: &str| v.get(f).and_then(|x| x.as_str()).map(str::to_string);
        let id = field("sentence_id").ok_or_else(|| parse("missing sentence_id".into()))?;
        let t = field("translation").ok_or_else(|| parse("missing translation".into()))?;
        out.insert(id, t);
    }
    Ok(out)
}

pub trait TranslatorProvider: Send + Sync {
    fn id(&self) -> &str;
    /// One output per input, in the same order.
    fn translate_batch(&self, sources: &[String]) -> Result<Vec<String>, TranslateError>;
}

pub struct IdentityTranslator;

impl TranslatorProvider for IdentityTranslator {
    fn id(&self) -> &str {
        "identity"
    }

    fn translate_batch(&self, sources: &[String]) -> Result<Vec<String>, TranslateError> {
        Ok(sources.to_vec())
    }
}

/// Applies a function to every sentence.
pub struct FnTranslator<F>(pub F);

impl<F: Fn(&str) -> String + Send + Sync> TranslatorProvider for FnTranslator<F> {
    fn id(&self) -> &str {
        "fn"
    }

    fn translate_batch(&self, sources: &[String]) -> Result<Vec<String>, TranslateError> {
        Ok(sources.iter().map(|s| (self.0)(s)).collect())
    }
}

/// Subprocess translator: `{"texts": [...]}` in, `{"translations": [...]}` out.
pub struct SubprocessTranslator(pub JsonlProcess);

impl TranslatorProvider for SubprocessTranslator {
    fn id(&self) -> &str {
        self.0.command()
    }

    fn translate_batch(&self, sources: &[String]) -> Result<Vec<String>, TranslateError> {
        let resp = self.0.call(&serde_json::json!({ "texts": sources }))?;
        let list = resp
            .get("translations")
            .and_then(|v| v.as_array())
            .ok_or_else(|| ProviderError::Protocol("response lacks `translations` array".into()))?;
        list.iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| ProviderError::Protocol("translation is not a string".into()).into())
            })
            .collect()
    }
}

/// Translates every table entry in batches of `batch_size`, checking that
/// each batch comes back with one result per input.
pub fn translate_table(
    table: &SentenceTable,
    provider: &dyn TranslatorProvider,
    batch_size: usize,
) -> Result<HashMap<String, String>, TranslateError> {
    let entries: Vec<(&String, &TableEntry)> = table.entries.iter().collect();
    let mut out = HashMap::with_capacity(entries.len());
    for batch in entries.chunks(batch_size.max(1)) {
        let sources: Vec<String> = batch.iter().map(|(_, e)| e.source_text.clone()).collect();
        let translated = provider.translate_batch(&sources)?;
        if translated.len() != sources.len() {
            return Err(TranslateError::LengthMismatch { expected: sources.len(), got: translated.len() });
        }
        for ((id, _), t) in batch.iter().zip(translated) {
            out.insert((*id).clone(), t);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub conv_id: String,
    pub turns: Vec<Turn>,
}

/// One skeleton per turn, with ids `{conv_id}#{turn}`.
pub fn template_conversation(conv: &Conversation) -> Vec<Skeleton> {
    conv.turns
        .iter()
        .enumerate()
        .map(|(i, t)| template(&format!("{}#{i}", conv.conv_id), &t.text))
        .collect()
}

pub fn replace_conversation(
    conv: &Conversation,
    skeletons: &[Skeleton],
    translations: &HashMap<String, String>,
) -> Result<Conversation, TranslateError> {
    let turns = conv
        .turns
        .iter()
        .zip(skeletons)
        .map(|(t, sk)| Ok(Turn { role: t.role.clone(), text: replace(sk, translations)? }))
        .collect::<Result<Vec<_>, TranslateError>>()?;
    Ok(Conversation { conv_id: conv.conv_id.clone(), turns })
}

pub fn identity_translations(skeleton: &Skeleton) -> HashMap<String, String> {
    skeleton
        .placeholder_order
        .iter()
        .zip(&skeleton.sentences)
        .map(|(id, s)| (id.clone(), s.clone()))
        .collect()
}
