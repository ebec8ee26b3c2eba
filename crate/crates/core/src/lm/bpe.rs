//! Subword tokenizers: byte-fallback BPE and a plain whitespace vocabulary.
//!
//! Ids 0, 1 and 2 are `<s>`, `</s>` and `<unk>`. A BPE vocabulary continues
//! with the 256 byte tokens, then the retained characters in code point
//! order, then one token per merge. Every word is prefixed with `▁`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::LmError;
use crate::binfmt::{FormatError, Reader, Writer};

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const UNK: u32 = 2;
const BYTE_BASE: u32 = 3;
const FIRST_FREE: u32 = BYTE_BASE + 256;
pub const MIN_VOCAB: usize = 300;
pub const WORD_MARK: char = '▁';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    Whitespace,
    Bpe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    kind: TokenizerKind,
    tokens: Vec<String>,
    /// Whitespace: word -> id. BPE: single characters -> id.
    index: HashMap<String, u32>,
    merges: Vec<(u32, u32)>,
    /// pair -> (rank, merged id)
    ranks: HashMap<(u32, u32), (u32, u32)>,
}

fn specials() -> Vec<String> {
    vec!["<s>".into(), "</s>".into(), "<unk>".into()]
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: i64,
    left: String,
    right: String,
    pair: (u32, u32),
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn merge_word(symbols: &[u32], pair: (u32, u32), new: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
            out.push(new);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    out
}

fn is_byte(id: u32) -> bool {
    (BYTE_BASE..FIRST_FREE).contains(&id)
}

impl Tokenizer {
    pub fn train<S: AsRef<str>>(corpus: &[S], kind: TokenizerKind, vocab_size: usize) -> Result<Self, LmError> {
        if vocab_size < MIN_VOCAB {
            return Err(LmError::Invalid(format!("vocab_size must be at least {MIN_VOCAB}")));
        }
        let mut word_freq: BTreeMap<&str, u64> = BTreeMap::new();
        for text in corpus {
            for w in text.as_ref().split_whitespace() {
                *word_freq.entry(w).or_default() += 1;
            }
        }
        if word_freq.is_empty() {
            return Err(LmError::CorpusTooSmall);
        }
        match kind {
            TokenizerKind::Whitespace => Ok(Self::train_whitespace(&word_freq, vocab_size)),
            TokenizerKind::Bpe => Ok(Self::train_bpe(&word_freq, vocab_size)),
        }
    }

    fn train_whitespace(word_freq: &BTreeMap<&str, u64>, vocab_size: usize) -> Self {
        let mut words: Vec<(&str, u64)> = word_freq.iter().map(|(w, c)| (*w, *c)).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        words.truncate(vocab_size - 3);
        let mut tokens = specials();
        tokens.extend(words.iter().map(|(w, _)| w.to_string()));
        Self::assemble(TokenizerKind::Whitespace, tokens, Vec::new())
    }

    fn train_bpe(word_freq: &BTreeMap<&str, u64>, vocab_size: usize) -> Self {
        let mut char_freq: BTreeMap<char, u64> = BTreeMap::new();
        for (w, f) in word_freq {
            *char_freq.entry(WORD_MARK).or_default() += f;
            for c in w.chars() {
                *char_freq.entry(c).or_default() += f;
            }
        }
        let budget = vocab_size - FIRST_FREE as usize;
        let mut chars: Vec<(char, u64)> = char_freq.into_iter().collect();
        if chars.len() > budget {
            chars.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            chars.truncate(budget);
        }
        let mut kept: Vec<char> = chars.into_iter().map(|(c, _)| c).collect();
        kept.sort_unstable();

        let mut tokens = specials();
        tokens.extend((0..=255u8).map(|b| format!("<0x{b:02X}>")));
        let char_id: HashMap<char, u32> =
            kept.iter().enumerate().map(|(i, c)| (*c, FIRST_FREE + i as u32)).collect();
        tokens.extend(kept.iter().map(|c| c.to_string()));

        let mut words: Vec<(Vec<u32>, i64)> = word_freq
            .iter()
            .map(|(w, f)| (initial_symbols(w, |c| char_id.get(&c).copied()), *f as i64))
            .collect();

        let mut counts: HashMap<(u32, u32), i64> = HashMap::new();
        let mut places: HashMap<(u32, u32), BTreeSet<usize>> = HashMap::new();
        for (wi, (syms, f)) in words.iter().enumerate() {
            for p in syms.windows(2).map(|w| (w[0], w[1])).filter(|p| !is_byte(p.0) && !is_byte(p.1)) {
                *counts.entry(p).or_default() += f;
                places.entry(p).or_default().insert(wi);
            }
        }
        let mut heap: BinaryHeap<Candidate> = counts
            .iter()
            .map(|(&pair, &count)| Candidate {
                count,
                left: tokens[pair.0 as usize].clone(),
                right: tokens[pair.1 as usize].clone(),
                pair,
            })
            .collect();

        let mut merges = Vec::new();
        while tokens.len() < vocab_size {
            let Some(best) = heap.pop() else { break };
            if counts.get(&best.pair).copied() != Some(best.count) {
                continue;
            }
            if best.count < 2 {
                break;
            }
            let new_id = tokens.len() as u32;
            tokens.push(format!("{}{}", best.left, best.right));
            merges.push(best.pair);

            let affected = places.remove(&best.pair).unwrap_or_default();
            let mut touched: BTreeSet<(u32, u32)> = BTreeSet::new();
            for wi in affected {
                let (syms, f) = &words[wi];
                let f = *f;
                if !syms.windows(2).any(|w| (w[0], w[1]) == best.pair) {
                    continue;
                }
                let merged = merge_word(syms, best.pair, new_id);
                for p in syms.windows(2).map(|w| (w[0], w[1])).filter(|p| !is_byte(p.0) && !is_byte(p.1)) {
                    *counts.get_mut(&p).expect("counted pair") -= f;
                    touched.insert(p);
                }
                for p in merged.windows(2).map(|w| (w[0], w[1])).filter(|p| !is_byte(p.0) && !is_byte(p.1)) {
                    *counts.entry(p).or_default() += f;
                    places.entry(p).or_default().insert(wi);
                    touched.insert(p);
                }
                words[wi].0 = merged;
            }
            counts.remove(&best.pair);
            for p in touched {
                match counts.get(&p).copied() {
                    Some(c) if c > 0 => heap.push(Candidate {
                        count: c,
                        left: tokens[p.0 as usize].clone(),
                        right: tokens[p.1 as usize].clone(),
                        pair: p,
                    }),
                    Some(_) => {
                        counts.remove(&p);
                    }
                    None => {}
                }
            }
        }
        Self::assemble(TokenizerKind::Bpe, tokens, merges)
    }

    fn assemble(kind: TokenizerKind, tokens: Vec<String>, merges: Vec<(u32, u32)>) -> Self {
        let index = match kind {
            TokenizerKind::Whitespace => {
                tokens.iter().enumerate().skip(3).map(|(i, t)| (t.clone(), i as u32)).collect()
            }
            TokenizerKind::Bpe => {
                let first_merge = tokens.len() - merges.len();
                (FIRST_FREE as usize..first_merge).map(|i| (tokens[i].clone(), i as u32)).collect()
            }
        };
        let first_merge = (tokens.len() - merges.len()) as u32;
        let ranks =
            merges.iter().enumerate().map(|(r, p)| (*p, (r as u32, first_merge + r as u32))).collect();
        Tokenizer { kind, tokens, index, merges, ranks }
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let mut syms = initial_symbols(word, |c| self.index.get(c.encode_utf8(&mut [0; 4]) as &str).copied());
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, new)| (rank, (w[0], w[1]), new)))
                .min();
            let Some((_, pair, new)) = best else { break };
            syms = merge_word(&syms, pair, new);
        }
        out.extend(syms);
    }

    /// Token ids for already-normalized text, without sentence markers.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            match self.kind {
                TokenizerKind::Whitespace => out.push(self.index.get(word).copied().unwrap_or(UNK)),
                TokenizerKind::Bpe => self.encode_word(word, &mut out),
            }
        }
        out
    }

    /// Inverse of [`Tokenizer::tokenize`] up to whitespace normalization.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        match self.kind {
            TokenizerKind::Whitespace => ids
                .iter()
                .filter(|&&id| id >= 3)
                .filter_map(|&id| self.token(id))
                .collect::<Vec<_>>()
                .join(" "),
            TokenizerKind::Bpe => {
                let mut bytes = Vec::new();
                for &id in ids {
                    if is_byte(id) {
                        bytes.push((id - BYTE_BASE) as u8);
                    } else if id >= FIRST_FREE {
                        if let Some(t) = self.token(id) {
                            bytes.extend_from_slice(t.as_bytes());
                        }
                    }
                }
                let s = String::from_utf8_lossy(&bytes).replace(WORD_MARK, " ");
                s.strip_prefix(' ').unwrap_or(&s).to_string()
            }
        }
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.u8(match self.kind {
            TokenizerKind::Whitespace => 0,
            TokenizerKind::Bpe => 1,
        });
        w.u64(self.tokens.len() as u64);
        for t in &self.tokens {
            w.str(t);
        }
        w.u64(self.merges.len() as u64);
        for (a, b) in &self.merges {
            w.u32(*a);
            w.u32(*b);
        }
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, FormatError> {
        let kind = match r.u8()? {
            0 => TokenizerKind::Whitespace,
            1 => TokenizerKind::Bpe,
            k => return Err(FormatError::Corrupt(format!("tokenizer kind {k}"))),
        };
        let n = r.len(8)?;
        let tokens = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        let m = r.len(8)?;
        let mut merges = Vec::with_capacity(m);
        for _ in 0..m {
            let (a, b) = (r.u32()?, r.u32()?);
            merges.push((a, b));
        }
        let min_len = if kind == TokenizerKind::Bpe { FIRST_FREE as usize } else { 3 };
        if tokens.len() < min_len + merges.len()
            || merges.iter().any(|&(a, b)| a as usize >= tokens.len() || b as usize >= tokens.len())
        {
            return Err(FormatError::Corrupt("inconsistent tokenizer".into()));
        }
        Ok(Self::assemble(kind, tokens, merges))
    }
}

/// `▁` followed by the word's characters; characters outside the
/// vocabulary become their UTF-8 byte tokens.
fn initial_symbols(word: &str, lookup: impl Fn(char) -> Option<u32>) -> Vec<u32> {
    let mut out = Vec::with_capacity(word.len() + 1);
    for c in std::iter::once(WORD_MARK).chain(word.chars()) {
        match lookup(c) {
            Some(id) => out.push(id),
            None => {
                let mut buf = [0u8; 4];
                out.extend(c.encode_utf8(&mut buf).bytes().map(|b| BYTE_BASE + b as u32));
            }
        }
    }
    out
}
