//! Interpolated Kneser-Ney n-gram model with one discount per order.
//!
//! Lower orders use continuation counts, except n-grams starting with `<s>`
//! which keep raw counts since nothing can precede them. The unigram level
//! interpolates with the uniform distribution over the vocabulary (all seen
//! tokens except `<s>`, plus `<unk>`). Probabilities are stored ARPA-style:
//! each seen n-gram holds its interpolated log10 probability and, as a
//! context, the log10 weight given to the next lower order.

use std::collections::HashMap;

use rayon::prelude::*;
use xxhash_rust::xxh3::xxh3_64;

use super::bpe::{BOS, EOS, UNK};
use super::LmError;
use crate::binfmt::{FormatError, Reader, Writer};

pub const FALLBACK_DISCOUNT: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NgramTable {
    hashes: Vec<u64>,
    logp: Vec<f64>,
    logb: Vec<f64>,
}

impl NgramTable {
    fn get(&self, key: u64) -> Option<usize> {
        self.hashes.binary_search(&key).ok()
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnModel {
    order: usize,
    /// Sorted token ids the model predicts.
    vocab: Vec<u32>,
    discounts: Vec<f64>,
    tables: Vec<NgramTable>,
}

pub fn ngram_hash(ids: &[u32]) -> u64 {
    let mut bytes = Vec::with_capacity(ids.len() * 4);
    for id in ids {
        bytes.extend_from_slice(&id.to_le_bytes());
    }
    xxh3_64(&bytes)
}

type Counts = Vec<HashMap<Vec<u32>, u64>>;

fn count_ngrams(sentences: &[Vec<u32>], order: usize) -> Counts {
    sentences
        .par_chunks(256)
        .map(|chunk| {
            let mut counts: Counts = vec![HashMap::new(); order];
            for s in chunk {
                let mut padded = Vec::with_capacity(s.len() + 2);
                padded.push(BOS);
                padded.extend_from_slice(s);
                padded.push(EOS);
                for n in 1..=order {
                    for w in padded.windows(n) {
                        *counts[n - 1].entry(w.to_vec()).or_default() += 1;
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![HashMap::new(); order],
            |mut a, b| {
                for (ta, tb) in a.iter_mut().zip(b) {
                    for (k, v) in tb {
                        *ta.entry(k).or_default() += v;
                    }
                }
                a
            },
        )
}

/// `n1 / (n1 + 2 n2)` over the adjusted counts of one order.
pub fn discount(adjusted: impl Iterator<Item = u64>) -> f64 {
    let (mut n1, mut n2) = (0u64, 0u64);
    for c in adjusted {
        match c {
            1 => n1 += 1,
            2 => n2 += 1,
            _ => {}
        }
    }
    if n1 == 0 || n2 == 0 {
        log::warn!(target: "lm", "degenerate counts-of-counts (n1={n1}, n2={n2}); using discount {FALLBACK_DISCOUNT}");
        FALLBACK_DISCOUNT
    } else {
        n1 as f64 / (n1 + 2 * n2) as f64
    }
}

impl KnModel {
    /// Trains on tokenized sentences, which must not contain `<s>` or `</s>`.
    pub fn train(sentences: &[Vec<u32>], order: usize) -> Result<Self, LmError> {
        if !(1..=8).contains(&order) {
            return Err(LmError::Invalid(format!("order {order} outside 1..=8")));
        }
        let tokens: usize = sentences.iter().map(|s| s.len() + 1).sum();
        if tokens < order {
            return Err(LmError::InsufficientData { tokens, order });
        }
        if sentences.iter().flatten().any(|&t| t == BOS || t == EOS) {
            return Err(LmError::Invalid("sentences must not contain <s> or </s>".into()));
        }
        let counts = count_ngrams(sentences, order);

        // Adjusted counts per order.
        let mut adjusted: Vec<HashMap<Vec<u32>, u64>> = Vec::with_capacity(order);
        for n in 1..=order {
            if n == order {
                adjusted.push(counts[n - 1].clone());
                continue;
            }
            let mut continuation: HashMap<&[u32], u64> = HashMap::new();
            for key in counts[n].keys() {
                *continuation.entry(&key[1..]).or_default() += 1;
            }
            let table = counts[n - 1]
                .iter()
                .filter(|(g, _)| !(n == 1 && g[0] == BOS))
                .map(|(g, &c)| {
                    let a = if g[0] == BOS { c } else { continuation.get(g.as_slice()).copied().unwrap_or(0) };
                    (g.clone(), a)
                })
                .collect();
            adjusted.push(table);
        }

        let discounts: Vec<f64> = adjusted.iter().map(|t| discount(t.values().copied())).collect();

        let mut vocab: Vec<u32> = adjusted[0].keys().map(|g| g[0]).collect();
        if !vocab.contains(&UNK) {
            vocab.push(UNK);
        }
        vocab.sort_unstable();
        let v = vocab.len() as f64;

        // Context totals and type counts per order.
        let context_stats = |n: usize| -> HashMap<&[u32], (u64, u64)> {
            let mut stats: HashMap<&[u32], (u64, u64)> = HashMap::new();
            for (g, &a) in &adjusted[n - 1] {
                let e = stats.entry(&g[..n - 1]).or_default();
                e.0 += a;
                e.1 += 1;
            }
            stats
        };

        // Natural-scale probabilities, order by order.
        let mut probs: Vec<HashMap<Vec<u32>, f64>> = Vec::with_capacity(order);
        let mut backoffs: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); order];
        {
            let d = discounts[0];
            let stats = context_stats(1);
            let (total, types) = stats.get(&[][..]).copied().unwrap_or((0, 0));
            let gamma = if total > 0 { d * types as f64 / total as f64 } else { 1.0 };
            let mut p1 = HashMap::with_capacity(vocab.len());
            for &w in &vocab {
                let a = adjusted[0].get(&vec![w]).copied().unwrap_or(0) as f64;
                let seen = if total > 0 { (a - d).max(0.0) / total as f64 } else { 0.0 };
                p1.insert(vec![w], seen + gamma / v);
            }
            probs.push(p1);
        }
        for n in 2..=order {
            let d = discounts[n - 1];
            let stats = context_stats(n);
            let mut pn = HashMap::with_capacity(adjusted[n - 1].len());
            for (g, &a) in &adjusted[n - 1] {
                let (total, types) = stats[&g[..n - 1]];
                let gamma = d * types as f64 / total as f64;
                let lower = probs[n - 2][&g[1..]];
                pn.insert(g.clone(), (a as f64 - d) / total as f64 + gamma * lower);
            }
            for (h, (total, types)) in stats {
                backoffs[n - 2].insert(h.to_vec(), d * types as f64 / total as f64);
            }
            probs.push(pn);
        }

        let mut tables = Vec::with_capacity(order);
        for n in 1..=order {
            let mut entries: Vec<(u64, f64, f64)> = probs[n - 1]
                .iter()
                .map(|(g, p)| (ngram_hash(g), p.log10(), backoffs[n - 1].get(g).map_or(0.0, |b| b.log10())))
                .collect();
            if n == 1 {
                let b = backoffs[0].get(&vec![BOS]).map_or(0.0, |b| b.log10());
                entries.push((ngram_hash(&[BOS]), f64::NEG_INFINITY, b));
            }
            entries.sort_by_key(|e| e.0);
            if entries.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(LmError::HashCollision { order: n });
            }
            tables.push(NgramTable {
                hashes: entries.iter().map(|e| e.0).collect(),
                logp: entries.iter().map(|e| e.1).collect(),
                logb: entries.iter().map(|e| e.2).collect(),
            });
        }
        Ok(KnModel { order, vocab, discounts, tables })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &[u32] {
        &self.vocab
    }

    pub fn discounts(&self) -> &[f64] {
        &self.discounts
    }

    pub fn table(&self, n: usize) -> &NgramTable {
        &self.tables[n - 1]
    }

    /// Maps ids the model has never seen to `<unk>`.
    pub fn map_token(&self, id: u32) -> u32 {
        if self.vocab.binary_search(&id).is_ok() {
            id
        } else {
            UNK
        }
    }

    /// log10 P(w | context). Only the last `order - 1` context tokens matter.
    pub fn log10_prob(&self, context: &[u32], w: u32) -> f64 {
        let w = self.map_token(w);
        let keep = context.len().min(self.order - 1);
        let ctx: Vec<u32> = context[context.len() - keep..].iter().map(|&t| if t == BOS { BOS } else { self.map_token(t) }).collect();
        let mut backoff = 0.0;
        let mut key = Vec::with_capacity(ctx.len() + 1);
        for start in 0..=ctx.len() {
            let h = &ctx[start..];
            key.clear();
            key.extend_from_slice(h);
            key.push(w);
            let table = &self.tables[h.len()];
            if let Some(i) = table.get(ngram_hash(&key)) {
                return backoff + table.logp[i];
            }
            if !h.is_empty() {
                let ht = &self.tables[h.len() - 1];
                if let Some(i) = ht.get(ngram_hash(h)) {
                    backoff += ht.logb[i];
                }
            }
        }
        unreachable!("every vocabulary token has a unigram entry")
    }

    pub fn prob(&self, context: &[u32], w: u32) -> f64 {
        10f64.powf(self.log10_prob(context, w))
    }

    /// Sum of log10 probabilities over a sentence's tokens and `</s>`,
    /// with the number of predictions.
    pub fn sentence_log10(&self, tokens: &[u32]) -> (f64, usize) {
        let mut history = Vec::with_capacity(tokens.len() + 1);
        history.push(BOS);
        let mut total = 0.0;
        for &t in tokens.iter().chain(std::iter::once(&EOS)) {
            total += self.log10_prob(&history, t);
            history.push(t);
        }
        (total, tokens.len() + 1)
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.u32(self.order as u32);
        w.u64(self.vocab.len() as u64);
        for &id in &self.vocab {
            w.u32(id);
        }
        for &d in &self.discounts {
            w.f64(d);
        }
        for t in &self.tables {
            w.u64(t.hashes.len() as u64);
            for i in 0..t.hashes.len() {
                w.u64(t.hashes[i]);
                w.f64(t.logp[i]);
                w.f64(t.logb[i]);
            }
        }
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, FormatError> {
        let order = r.u32()? as usize;
        if !(1..=8).contains(&order) {
            return Err(FormatError::Corrupt(format!("order {order}")));
        }
        let nv = r.len(4)?;
        let vocab = (0..nv).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        if vocab.windows(2).any(|w| w[0] >= w[1]) || vocab.binary_search(&UNK).is_err() {
            return Err(FormatError::Corrupt("vocabulary".into()));
        }
        let discounts = (0..order).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let mut tables = Vec::with_capacity(order);
        for _ in 0..order {
            let n = r.len(24)?;
            let mut t = NgramTable {
                hashes: Vec::with_capacity(n),
                logp: Vec::with_capacity(n),
                logb: Vec::with_capacity(n),
            };
            for _ in 0..n {
                t.hashes.push(r.u64()?);
                t.logp.push(r.f64()?);
                t.logb.push(r.f64()?);
            }
            if t.hashes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(FormatError::Corrupt("unsorted n-gram table".into()));
            }
            tables.push(t);
        }
        let unigrams = &tables[0];
        if vocab.iter().any(|&id| unigrams.get(ngram_hash(&[id])).is_none()) {
            return Err(FormatError::Corrupt("vocabulary token without unigram".into()));
        }
        Ok(KnModel { order, vocab, discounts, tables })
    }
}
