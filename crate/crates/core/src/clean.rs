//! In-document cleaning: code spans, unterminated lines, symbol-only,
//! repeated and short chunks, and the symbol-heavy document verdict.

use std::collections::{BTreeSet, HashSet};
use std::sync::LazyLock;

use icu_properties::props::ExtendedPictographic;
use icu_properties::CodePointSetData;
use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory as Gc};

use crate::analyze::AnalyzeError;
use crate::model::{Source, Stage, StageVerdict};

pub const DEFAULT_TERMINAL_PUNCT: &str = ".!?\"'।॥۔;:";

/// Cleaning settings as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanSettings {
    pub apply_code_span: bool,
    pub apply_terminal_punct: bool,
    pub apply_repeated_chunk: bool,
    pub min_chunk_words: usize,
    /// Characters accepted as line terminators.
    pub terminal_punct: String,
}

impl Default for CleanSettings {
    fn default() -> Self {
        CleanSettings {
            apply_code_span: true,
            apply_terminal_punct: true,
            apply_repeated_chunk: true,
            min_chunk_words: 3,
            terminal_punct: DEFAULT_TERMINAL_PUNCT.to_string(),
        }
    }
}

impl CleanSettings {
    pub fn validate(&self) -> Result<(), String> {
        if self.terminal_punct.trim().is_empty() {
            return Err("clean.terminal_punct must not be empty".into());
        }
        Ok(())
    }
}

/// Effective cleaning parameters for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanConfig {
    pub apply_code_span: bool,
    pub apply_terminal_punct: bool,
    pub apply_repeated_chunk: bool,
    pub min_chunk_words: usize,
    pub max_symbol_ratio: f64,
    pub terminal_punct_set: BTreeSet<char>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig::new(&CleanSettings::default(), 0.5, None)
    }
}

impl CleanConfig {
    pub fn new(settings: &CleanSettings, max_symbol_ratio: f64, punct_override: Option<&str>) -> Self {
        let punct = punct_override.unwrap_or(&settings.terminal_punct);
        CleanConfig {
            apply_code_span: settings.apply_code_span,
            apply_terminal_punct: settings.apply_terminal_punct,
            apply_repeated_chunk: settings.apply_repeated_chunk,
            min_chunk_words: settings.min_chunk_words,
            max_symbol_ratio,
            terminal_punct_set: punct.chars().filter(|c| !c.is_whitespace()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub text: String,
    pub index: usize,
}

static HTML_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[a-zA-Z/!][^>]*>").unwrap());
static JS_FUNCTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"function\s*[\w$]*\s*\([^()]*\)\s*\{[^{}]*\}").unwrap());
static JS_STATEMENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:var|let|const) [^\n]*(?:\n|$)").unwrap());
static CSS_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^[ \t]*[#.\w\-\[\]=:, >*]+\{\s*[\w\-]+\s*:[^{}\n]*\}[ \t]*(?:\n|$)").unwrap()
});
static BRACE_BLOCK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{[^{}\n]*\}").unwrap());

fn remove_pass(text: &str) -> String {
    let text = HTML_TAG.replace_all(text, "");
    let text = JS_FUNCTION.replace_all(&text, "");
    let text = JS_STATEMENT.replace_all(&text, "");
    let text = CSS_LINE.replace_all(&text, "");
    BRACE_BLOCK
        .replace_all(&text, |caps: &regex::Captures<'_>| {
            let m = &caps[0];
            if symbol_ratio(m).unwrap_or(0.0) > 0.4 {
                String::new()
            } else {
                m.to_string()
            }
        })
        .into_owned()
}

/// Deletes HTML tags, JavaScript statement lines and function bodies,
/// CSS rule lines and symbol-dense `{...}` blocks. Passes repeat until
/// nothing changes, since one deletion can expose another span.
pub fn remove_code_spans(text: &str) -> String {
    let mut cur = text.to_string();
    loop {
        let next = remove_pass(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

static PICTOGRAPHIC: LazyLock<CodePointSetData> =
    LazyLock::new(|| CodePointSetData::new::<ExtendedPictographic>().static_to_owned());

pub fn is_symbol_char(c: char) -> bool {
    use Gc::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
            | MathSymbol
            | CurrencySymbol
            | ModifierSymbol
            | OtherSymbol
    ) || PICTOGRAPHIC.as_borrowed().contains(c)
}

/// Fraction of non-whitespace characters that are punctuation, symbols or emoji.
pub fn symbol_ratio(text: &str) -> Result<f64, AnalyzeError> {
    let (mut sym, mut total) = (0usize, 0usize);
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if is_symbol_char(c) {
            sym += 1;
        }
    }
    if total == 0 {
        return Err(AnalyzeError::EmptyText);
    }
    Ok(sym as f64 / total as f64)
}

/// True when the document should be kept.
pub fn symbol_heavy_verdict(text: &str, max_ratio: f64) -> Result<bool, AnalyzeError> {
    if text.is_empty() {
        return Err(AnalyzeError::EmptyText);
    }
    Ok(symbol_ratio(text).unwrap_or(1.0) <= max_ratio)
}

/// Removes lines that do not end in a terminator. Blank lines stay so that
/// chunk boundaries survive.
pub fn terminal_punct_filter(text: &str, punct_set: &BTreeSet<char>) -> String {
    text.split('\n')
        .filter(|line| {
            let t = line.trim();
            t.is_empty() || t.chars().last().is_some_and(|c| punct_set.contains(&c))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits into maximal runs of non-blank lines.
pub fn split_chunks(text: &str) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.split('\n') {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                chunks.push(Chunk { text: cur.join("\n"), index: chunks.len() });
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        chunks.push(Chunk { text: cur.join("\n"), index: chunks.len() });
    }
    chunks
}

pub fn join_chunks(chunks: &[Chunk]) -> String {
    chunks.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join("\n\n")
}

pub fn drop_symbol_only_chunks(chunks: Vec<Chunk>) -> Vec<Chunk> {
    chunks.into_iter().filter(|c| c.text.chars().any(char::is_alphabetic)).collect()
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn drop_repeated_chunks(chunks: Vec<Chunk>) -> Vec<Chunk> {
    let mut seen = HashSet::new();
    chunks.into_iter().filter(|c| seen.insert(normalize_ws(&c.text))).collect()
}

pub fn drop_short_chunks(chunks: Vec<Chunk>, min_words: usize) -> Vec<Chunk> {
    chunks.into_iter().filter(|c| c.text.split_whitespace().count() >= min_words).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanOutcome {
    pub text: String,
    pub verdict: StageVerdict,
}

fn clean_once(text: &str, source: Source, cfg: &CleanConfig) -> String {
    let web = source == Source::Web;
    let pdf = source == Source::Pdf;
    let mut text = text.to_string();
    if web && cfg.apply_code_span {
        text = remove_code_spans(&text);
    }
    if web && cfg.apply_terminal_punct {
        text = terminal_punct_filter(&text, &cfg.terminal_punct_set);
    }
    let mut chunks = drop_symbol_only_chunks(split_chunks(&text));
    if pdf && cfg.apply_repeated_chunk {
        chunks = drop_repeated_chunks(chunks);
    }
    if pdf {
        chunks = drop_short_chunks(chunks, cfg.min_chunk_words);
    }
    join_chunks(&chunks)
}

/// Runs the cleaning filters allowed for `source`, then the symbol-heavy
/// verdict. The composition is repeated to a fixpoint so that cleaning a
/// cleaned text is a no-op.
pub fn clean_document(text: &str, source: Source, cfg: &CleanConfig, timestamp: i64) -> CleanOutcome {
    let mut cur = clean_once(text, source, cfg);
    loop {
        let next = clean_once(&cur, source, cfg);
        if next == cur {
            break;
        }
        cur = next;
    }
    let verdict = if cur.trim().is_empty() {
        StageVerdict::drop_one(Stage::Clean, "empty_after_clean", timestamp)
    } else if symbol_heavy_verdict(&cur, cfg.max_symbol_ratio).unwrap_or(false) {
        StageVerdict::keep(Stage::Clean, timestamp)
    } else {
        StageVerdict::drop_one(Stage::Clean, "symbol_heavy", timestamp)
    };
    CleanOutcome { text: cur, verdict }
}
