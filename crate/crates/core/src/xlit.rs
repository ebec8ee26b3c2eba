//! Dictionary transliteration: a code-point trie of source words,
//! whole-word replacement, logging of unmapped words and an iterative
//! fill loop against a pluggable romanizer.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_script::{Script, UnicodeScript};

use crate::binfmt::{FormatError, Reader, Writer};
use crate::provider::{JsonlProcess, ProviderError};

#[derive(Debug, Error)]
pub enum XlitError {
    #[error("invalid dictionary entry `{0}`: sources must be single non-empty words")]
    InvalidEntry(String),
    #[error("romanizer failed: {0}")]
    ProviderFailure(String),
    #[error("{} words still unmapped after {rounds} rounds: {}", .remaining.len(), .remaining.join(", "))]
    NonConvergence { rounds: usize, remaining: Vec<String> },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
}

pub const DEFAULT_MAX_ROUNDS: usize = 5;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Node {
    /// Sorted by character.
    children: Vec<(char, u32)>,
    value: Option<u32>,
}

/// Prefix trie from source words to romanizations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XlitDict {
    nodes: Vec<Node>,
    values: Vec<String>,
    size: usize,
    /// Inserts that replaced an existing romanization.
    pub overwrites: usize,
}

impl Default for XlitDict {
    fn default() -> Self {
        XlitDict { nodes: vec![Node::default()], values: Vec::new(), size: 0, overwrites: 0 }
    }
}

impl XlitDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn insert(&mut self, source: &str, roman: &str) -> Result<(), XlitError> {
        if source.is_empty() || source.chars().any(char::is_whitespace) {
            return Err(XlitError::InvalidEntry(source.to_string()));
        }
        let mut cur = 0usize;
        for c in source.chars() {
            cur = match self.nodes[cur].children.binary_search_by_key(&c, |&(k, _)| k) {
                Ok(i) => self.nodes[cur].children[i].1 as usize,
                Err(i) => {
                    let id = self.nodes.len();
                    self.nodes.push(Node::default());
                    self.nodes[cur].children.insert(i, (c, id as u32));
                    id
                }
            };
        }
        match self.nodes[cur].value {
            Some(v) => {
                if self.values[v as usize] != roman {
                    log::warn!("duplicate transliteration for `{source}`; keeping the later one");
                }
                self.overwrites += 1;
                self.values[v as usize] = roman.to_string();
            }
            None => {
                self.nodes[cur].value = Some(self.values.len() as u32);
                self.values.push(roman.to_string());
                self.size += 1;
            }
        }
        Ok(())
    }

    /// Exact whole-word lookup.
    pub fn lookup(&self, word: &str) -> Option<&str> {
        let mut cur = 0usize;
        for c in word.chars() {
            let node = &self.nodes[cur];
            let i = node.children.binary_search_by_key(&c, |&(k, _)| k).ok()?;
            cur = node.children[i].1 as usize;
        }
        self.nodes[cur].value.map(|v| self.values[v as usize].as_str())
    }

    /// All pairs, sorted by source.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::with_capacity(self.size);
        let mut stack = vec![(0usize, String::new())];
        while let Some((n, prefix)) = stack.pop() {
            if let Some(v) = self.nodes[n].value {
                out.push((prefix.clone(), self.values[v as usize].clone()));
            }
            for &(c, child) in self.nodes[n].children.iter().rev() {
                let mut p = prefix.clone();
                p.push(c);
                stack.push((child as usize, p));
            }
        }
        out
    }

    /// Sorted `source\troman` lines.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(&k);
            s.push('\t');
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    pub fn from_tsv<R: BufRead>(r: R) -> Result<Self, XlitError> {
        let mut pairs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| XlitError::Io("tsv".into(), e))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| XlitError::Parse { line: i + 1, msg: "expected source<TAB>roman".into() })?;
            pairs.push((k.to_string(), v.to_string()));
        }
        build_dict(&pairs)
    }

    fn write(&self, w: &mut Writer) {
        w.u64(self.nodes.len() as u64);
        for n in &self.nodes {
            w.u64(n.children.len() as u64);
            for &(c, id) in &n.children {
                w.u32(c as u32);
                w.u32(id);
            }
            w.u32(n.value.map_or(u32::MAX, |v| v));
        }
        w.u64(self.values.len() as u64);
        for v in &self.values {
            w.str(v);
        }
    }

    fn read(r: &mut Reader) -> Result<Self, FormatError> {
        let n_nodes = r.len(12)?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let n_children = r.len(8)?;
            let mut children = Vec::with_capacity(n_children);
            for _ in 0..n_children {
                let c = char::from_u32(r.u32()?).ok_or_else(|| FormatError::Corrupt("bad char".into()))?;
                let id = r.u32()?;
                if id as usize >= n_nodes {
                    return Err(FormatError::Corrupt("child index out of range".into()));
                }
                children.push((c, id));
            }
            let v = r.u32()?;
            nodes.push(Node { children, value: (v != u32::MAX).then_some(v) });
        }
        let n_values = r.len(8)?;
        let values = (0..n_values).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        if nodes.iter().filter_map(|n| n.value).any(|v| v as usize >= values.len()) || nodes.is_empty() {
            return Err(FormatError::Corrupt("value index out of range".into()));
        }
        Ok(XlitDict { size: values.len(), nodes, values, overwrites: 0 })
    }
}

/// Builds a dictionary; later duplicates overwrite earlier ones.
pub fn build_dict<S: AsRef<str>, T: AsRef<str>>(pairs: &[(S, T)]) -> Result<XlitDict, XlitError> {
    let mut d = XlitDict::new();
    for (s, t) in pairs {
        d.insert(s.as_ref(), t.as_ref())?;
    }
    if d.overwrites > 0 {
        log::warn!("{} duplicate dictionary sources overwritten", d.overwrites);
    }
    Ok(d)
}

const CACHE_MAGIC: &[u8; 8] = b"SETUXL01";
const CACHE_VERSION: u32 = 1;

pub fn save_tsv(dict: &XlitDict, path: &Path) -> Result<(), XlitError> {
    crate::pipeline::write_atomic(path, dict.to_tsv().as_bytes()).map_err(|e| XlitError::Io(path.display().to_string(), e))
}

/// Loads a TSV dictionary through a compiled trie cache at `cache`. The
/// cache is rebuilt when the TSV content hash differs.
pub fn load_cached(tsv: &Path, cache: &Path) -> Result<XlitDict, XlitError> {
    let bytes = std::fs::read(tsv).map_err(|e| XlitError::Io(tsv.display().to_string(), e))?;
    let hash = Sha256::digest(&bytes);
    if let Ok(cached) = std::fs::read(cache) {
        let attempt = (|| -> Result<Option<XlitDict>, FormatError> {
            let mut r = Reader::open(&cached, CACHE_MAGIC, CACHE_VERSION)?;
            let stored: Vec<u8> = (0..32).map(|_| r.u8()).collect::<Result<_, _>>()?;
            if stored != hash.as_slice() {
                return Ok(None);
            }
            let d = XlitDict::read(&mut r)?;
            r.finish()?;
            Ok(Some(d))
        })();
        match attempt {
            Ok(Some(d)) => return Ok(d),
            Ok(None) => log::info!("transliteration cache is stale; rebuilding"),
            Err(e) => log::warn!("transliteration cache unreadable ({e}); rebuilding"),
        }
    }
    let dict = XlitDict::from_tsv(bytes.as_slice())?;
    let mut w = Writer::new(CACHE_MAGIC, CACHE_VERSION);
    for b in hash.iter() {
        w.u8(*b);
    }
    dict.write(&mut w);
    crate::pipeline::write_atomic(cache, &w.finish()).map_err(|e| XlitError::Io(cache.display().to_string(), e))?;
    Ok(dict)
}

/// Letters and marks, plus the zero-width joiners used inside Indic conjuncts.
pub fn is_word_char(c: char) -> bool {
    if c == '\u{200C}' || c == '\u{200D}' {
        return true;
    }
    matches!(
        get_general_category(c),
        GeneralCategory::UppercaseLetter
            | GeneralCategory::LowercaseLetter
            | GeneralCategory::TitlecaseLetter
            | GeneralCategory::ModifierLetter
            | GeneralCategory::OtherLetter
            | GeneralCategory::NonspacingMark
            | GeneralCategory::SpacingMark
            | GeneralCategory::EnclosingMark
    )
}

/// Whether `word` has a letter outside the Latin script.
pub fn needs_romanization(word: &str) -> bool {
    word.chars()
        .any(|c| c.is_alphabetic() && !matches!(c.script(), Script::Latin | Script::Common | Script::Inherited))
}

/// Splits text into alternating `(is_word, span)` runs covering it exactly.
pub fn word_spans(text: &str) -> Vec<(bool, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut state = None;
    for (i, c) in text.char_indices() {
        let w = is_word_char(c);
        if state.is_some_and(|s| s != w) {
            out.push((state.unwrap(), &text[start..i]));
            start = i;
        }
        state = Some(w);
    }
    if let Some(s) = state {
        out.push((s, &text[start..]));
    }
    out
}

/// Words that need romanization but have no dictionary entry.
pub type UnmappedLog = BTreeMap<String, u64>;

/// Replaces every whole word found in the dictionary. Since matching is
/// by whole word, an entry can never fire inside a longer word, which is
/// the guarantee longest-source-first ordering is meant to provide.
pub fn replace_words(text: &str, dict: &XlitDict) -> (String, UnmappedLog) {
    let mut out = String::with_capacity(text.len());
    let mut log = UnmappedLog::new();
    for (is_word, span) in word_spans(text) {
        if !is_word {
            out.push_str(span);
            continue;
        }
        match dict.lookup(span) {
            Some(r) => out.push_str(r),
            None => {
                if needs_romanization(span) {
                    *log.entry(span.to_string()).or_insert(0) += 1;
                }
                out.push_str(span);
            }
        }
    }
    (out, log)
}

pub trait Romanizer: Send + Sync {
    fn id(&self) -> &str;
    /// One result per word; `None` means the word could not be romanized.
    fn romanize_batch(&self, words: &[String]) -> Result<Vec<Option<String>>, XlitError>;
}

/// Returns each word unchanged.
pub struct IdentityRomanizer;

impl Romanizer for IdentityRomanizer {
    fn id(&self) -> &str {
        "identity"
    }

    fn romanize_batch(&self, words: &[String]) -> Result<Vec<Option<String>>, XlitError> {
        Ok(words.iter().cloned().map(Some).collect())
    }
}

/// Looks words up in a fixed table.
pub struct TableRomanizer(pub BTreeMap<String, String>);

impl Romanizer for TableRomanizer {
    fn id(&self) -> &str {
        "table"
    }

    fn romanize_batch(&self, words: &[String]) -> Result<Vec<Option<String>>, XlitError> {
        Ok(words.iter().map(|w| self.0.get(w).cloned()).collect())
    }
}

/// Subprocess romanizer: `{"words": [...]}` in, `{"romanized": [str|null, ...]}` out.
pub struct SubprocessRomanizer(pub JsonlProcess);

impl Romanizer for SubprocessRomanizer {
    fn id(&self) -> &str {
        self.0.command()
    }

    fn romanize_batch(&self, words: &[String]) -> Result<Vec<Option<String>>, XlitError> {
        let fail = |e: ProviderError| XlitError::ProviderFailure(e.to_string());
        let resp = self.0.call(&serde_json::json!({ "words": words })).map_err(fail)?;
        let list = resp
            .get("romanized")
            .and_then(|v| v.as_array())
            .ok_or_else(|| XlitError::ProviderFailure("response lacks `romanized` array".into()))?;
        Ok(list.iter().map(|v| v.as_str().map(str::to_string)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterateReport {
    pub rounds: usize,
    pub added: usize,
}

/// Alternates replacement and dictionary filling until no unmapped word
/// is left or `max_rounds` replacement passes have run.
pub fn iterate(
    text: &str,
    dict: &mut XlitDict,
    romanizer: &dyn Romanizer,
    max_rounds: usize,
) -> Result<(String, IterateReport), XlitError> {
    let mut added = 0;
    for round in 1..=max_rounds.max(1) {
        let (out, log) = replace_words(text, dict);
        if log.is_empty() {
            return Ok((out, IterateReport { rounds: round, added }));
        }
        if round == max_rounds.max(1) {
            return Err(XlitError::NonConvergence { rounds: round, remaining: log.into_keys().collect() });
        }
        let words: Vec<String> = log.into_keys().collect();
        let results = romanizer.romanize_batch(&words)?;
        if results.len() != words.len() {
            return Err(XlitError::ProviderFailure(format!(
                "{} results for {} words",
                results.len(),
                words.len()
            )));
        }
        for (w, r) in words.iter().zip(results) {
            if let Some(r) = r {
                dict.insert(w, &r)?;
                added += 1;
            }
        }
    }
    unreachable!("loop returns on its last round")
}

/// Unmapped words of many texts, merged.
pub fn collect_unmapped<'a, I: IntoIterator<Item = &'a str>>(texts: I, dict: &XlitDict) -> UnmappedLog {
    let mut all = UnmappedLog::new();
    for t in texts {
        for (w, n) in replace_words(t, dict).1 {
            *all.entry(w).or_insert(0) += n;
        }
    }
    all
}

/// Distinct non-Latin words, useful to seed a dictionary.
pub fn words_needing_romanization(text: &str) -> BTreeSet<&str> {
    word_spans(text).into_iter().filter(|(w, s)| *w && needs_romanization(s)).map(|(_, s)| s).collect()
}
