//! Per-document statistics consumed by the flagging stage.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;
use unicode_script::{Script, UnicodeScript};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyzeError {
    #[error("document text is empty")]
    EmptyText,
    #[error("lexicon `{0}` has no entries")]
    EmptyLexicon(String),
    #[error("cannot read lexicon: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocStats {
    pub bytes: u64,
    pub word_count: u64,
    pub char_count: u64,
    pub lines_count: u64,
    pub mean_line_length: f64,
    pub min_line_length: u64,
    pub max_line_length: u64,
    pub nsfw_words_count: u64,
    pub non_li_character_count: u64,
    pub char_rep_10_score: f64,
    pub word_rep_5_score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct NsfwLexicon {
    pub language: String,
    words: HashSet<String>,
}

fn normalize_word(w: &str) -> String {
    w.nfc().flat_map(char::to_lowercase).collect()
}

/// Strips leading/trailing punctuation so "word," matches "word".
fn trim_punct(w: &str) -> &str {
    use unicode_general_category::{get_general_category, GeneralCategory as G};
    let is_p = |c: char| {
        matches!(
            get_general_category(c),
            G::ConnectorPunctuation
                | G::DashPunctuation
                | G::OpenPunctuation
                | G::ClosePunctuation
                | G::InitialPunctuation
                | G::FinalPunctuation
                | G::OtherPunctuation
        )
    };
    w.trim_matches(is_p)
}

impl NsfwLexicon {
    pub fn empty(language: &str) -> Self {
        NsfwLexicon { language: language.to_string(), words: HashSet::new() }
    }

    pub fn from_words<I, S>(language: &str, words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words = words
            .into_iter()
            .map(|w| normalize_word(w.as_ref().trim()))
            .filter(|w| !w.is_empty())
            .collect();
        NsfwLexicon { language: language.to_string(), words }
    }

    /// One word per line; `#` starts a comment line.
    pub fn parse(language: &str, content: &str) -> Result<Self, AnalyzeError> {
        let lex = Self::from_words(
            language,
            content.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')),
        );
        if lex.words.is_empty() {
            return Err(AnalyzeError::EmptyLexicon(language.to_string()));
        }
        Ok(lex)
    }

    pub fn load(language: &str, path: &Path) -> Result<Self, AnalyzeError> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| AnalyzeError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(language, &content)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        if self.words.is_empty() {
            return false;
        }
        let w = normalize_word(word);
        self.words.contains(&w) || self.words.contains(trim_punct(&w))
    }
}

/// Mass of repeated n-grams over total n-gram mass.
///
/// Counts every window of `n` items, then divides the summed counts of
/// n-grams occurring at least twice by the number of windows.
fn duplicated_mass<T: Hash + Eq>(items: &[T], n: usize) -> f64 {
    if n == 0 || items.len() < n {
        return 0.0;
    }
    let total = items.len() - n + 1;
    let mut counts: HashMap<&[T], usize> = HashMap::with_capacity(total);
    for gram in items.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    let repeated: usize = counts.values().filter(|&&c| c >= 2).sum();
    repeated as f64 / total as f64
}

pub fn word_rep_score(text: &str, n: usize) -> f64 {
    let words: Vec<&str> = text.split_whitespace().collect();
    duplicated_mass(&words, n)
}

pub fn char_rep_score(text: &str, n: usize) -> f64 {
    let mut chars = Vec::with_capacity(text.len());
    for (i, w) in text.split_whitespace().enumerate() {
        if i > 0 {
            chars.push(' ');
        }
        chars.extend(w.chars());
    }
    duplicated_mass(&chars, n)
}

/// Counts letters whose script is neither Latin nor one of `allowed`.
pub fn non_li_count(text: &str, allowed: &[Script]) -> u64 {
    text.chars()
        .filter(|c| c.is_alphabetic())
        .filter(|c| {
            let s = c.script();
            !(s == Script::Latin || s == Script::Common || s == Script::Inherited || allowed.contains(&s))
        })
        .count() as u64
}

pub fn compute_stats(
    text: &str,
    lexicon: &NsfwLexicon,
    allowed_scripts: &[Script],
) -> Result<DocStats, AnalyzeError> {
    if text.trim().is_empty() {
        return Err(AnalyzeError::EmptyText);
    }

    let mut word_count = 0u64;
    let mut nsfw = 0u64;
    for w in text.split_whitespace() {
        word_count += 1;
        if lexicon.contains(w) {
            nsfw += 1;
        }
    }

    let line_lengths: Vec<u64> = text
        .split('\n')
        .map(|l| l.split_whitespace().count() as u64)
        .filter(|&n| n > 0)
        .collect();
    let lines_count = line_lengths.len() as u64;
    let mean_line_length =
        if lines_count == 0 { 0.0 } else { line_lengths.iter().sum::<u64>() as f64 / lines_count as f64 };

    Ok(DocStats {
        bytes: text.len() as u64,
        word_count,
        char_count: text.chars().count() as u64,
        lines_count,
        mean_line_length,
        min_line_length: line_lengths.iter().copied().min().unwrap_or(0),
        max_line_length: line_lengths.iter().copied().max().unwrap_or(0),
        nsfw_words_count: nsfw,
        non_li_character_count: non_li_count(text, allowed_scripts),
        char_rep_10_score: char_rep_score(text, 10),
        word_rep_5_score: word_rep_score(text, 5),
    })
}
