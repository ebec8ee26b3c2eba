//! Character n-gram language classifier.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use unicode_normalization::UnicodeNormalization;

use super::{LidError, LidPrediction, LidProvider};
use crate::binfmt::{FormatError, Reader, Writer};
use crate::model::{is_valid_language, UNDETERMINED};

const MAGIC: &[u8; 8] = b"SETULI01";
const VERSION: u32 = 1;

/// Only this many characters of a document are scored.
pub const MAX_CLASSIFY_CHARS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Default)]
struct LangCounts {
    total: u64,
    counts: HashMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct OrderTable {
    vocab: u64,
    /// Indexed like `CharNgramModel::languages`.
    per_lang: Vec<LangCounts>,
}

/// Add-k smoothed character n-gram tables for every order up to `order`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharNgramModel {
    order: usize,
    smoothing: f64,
    languages: Vec<String>,
    tables: Vec<OrderTable>,
}

fn prepare(text: &str) -> Vec<char> {
    let lowered: String = text.nfc().flat_map(char::to_lowercase).take(MAX_CLASSIFY_CHARS).collect();
    let mut out = vec![' '];
    for word in lowered.split_whitespace() {
        out.extend(word.chars());
        out.push(' ');
    }
    out
}

fn grams(chars: &[char], n: usize) -> impl Iterator<Item = String> + '_ {
    chars.windows(n).map(|w| w.iter().collect())
}

impl CharNgramModel {
    pub fn train<S: AsRef<str>, T: AsRef<str>>(
        corpus: &[(S, T)],
        order: usize,
        smoothing: f64,
    ) -> Result<Self, LidError> {
        if order < 2 {
            return Err(LidError::Training("order must be at least 2".into()));
        }
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(LidError::Training("smoothing must be positive".into()));
        }
        if corpus.is_empty() {
            return Err(LidError::Training("training corpus is empty".into()));
        }
        let mut by_lang: BTreeMap<String, Vec<&str>> = BTreeMap::new();
        for (lang, text) in corpus {
            let lang = lang.as_ref();
            if !is_valid_language(lang) || lang == UNDETERMINED {
                return Err(LidError::Training(format!("invalid language code `{lang}`")));
            }
            by_lang.entry(lang.to_string()).or_default().push(text.as_ref());
        }
        let languages: Vec<String> = by_lang.keys().cloned().collect();
        let mut tables = vec![OrderTable::default(); order];
        for texts in by_lang.values() {
            let prepared: Vec<Vec<char>> = texts.iter().map(|t| prepare(t)).collect();
            for n in 1..=order {
                let mut lc = LangCounts::default();
                for chars in &prepared {
                    for g in grams(chars, n) {
                        *lc.counts.entry(g).or_default() += 1;
                        lc.total += 1;
                    }
                }
                tables[n - 1].per_lang.push(lc);
            }
        }
        for table in &mut tables {
            let mut vocab: std::collections::HashSet<&str> = std::collections::HashSet::new();
            for lc in &table.per_lang {
                vocab.extend(lc.counts.keys().map(String::as_str));
            }
            table.vocab = vocab.len() as u64;
        }
        Ok(CharNgramModel { order, smoothing, languages, tables })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    /// Mean natural-log probability per n-gram for each language, or
    /// `None` when no n-gram of the text was seen in training.
    pub fn scores(&self, text: &str, order: usize) -> Option<Vec<(String, f64)>> {
        let chars = prepare(text);
        let n = order.clamp(1, self.order).min(chars.len());
        if n == 0 {
            return None;
        }
        let table = &self.tables[n - 1];
        let k = self.smoothing;
        let gs: Vec<String> = grams(&chars, n).collect();
        if !gs.iter().any(|g| table.per_lang.iter().any(|lc| lc.counts.contains_key(g))) {
            return None;
        }
        Some(
            self.languages
                .iter()
                .zip(&table.per_lang)
                .map(|(lang, lc)| {
                    let denom = lc.total as f64 + k * (table.vocab as f64 + 1.0);
                    let sum: f64 = gs
                        .iter()
                        .map(|g| ((lc.counts.get(g).copied().unwrap_or(0) as f64 + k) / denom).ln())
                        .sum();
                    (lang.clone(), sum / gs.len() as f64)
                })
                .collect(),
        )
    }

    /// Best language with confidence equal to the softmax probability gap
    /// between the top two languages.
    pub fn classify(&self, text: &str, order: usize) -> Result<(String, f64), LidError> {
        if text.trim().is_empty() {
            return Err(LidError::EmptyText);
        }
        let Some(mut scores) = self.scores(text, order) else {
            return Ok((UNDETERMINED.to_string(), 0.0));
        };
        scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let max = scores[0].1;
        let z: f64 = scores.iter().map(|(_, s)| (s - max).exp()).sum();
        let p1 = 1.0 / z;
        let p2 = scores.get(1).map_or(0.0, |(_, s)| (s - max).exp() / z);
        Ok((scores[0].0.clone(), (p1 - p2).clamp(0.0, 1.0)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(self.order as u32);
        w.f64(self.smoothing);
        w.u64(self.languages.len() as u64);
        for l in &self.languages {
            w.str(l);
        }
        for table in &self.tables {
            w.u64(table.vocab);
            for lc in &table.per_lang {
                w.u64(lc.total);
                let mut entries: Vec<(&String, &u64)> = lc.counts.iter().collect();
                entries.sort();
                w.u64(entries.len() as u64);
                for (g, c) in entries {
                    w.str(g);
                    w.u64(*c);
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::open(buf, MAGIC, VERSION)?;
        let order = r.u32()? as usize;
        if !(2..=16).contains(&order) {
            return Err(FormatError::Corrupt(format!("order {order}")));
        }
        let smoothing = r.f64()?;
        let nlangs = r.len(8)?;
        let languages = (0..nlangs).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        let mut tables = Vec::with_capacity(order);
        for _ in 0..order {
            let vocab = r.u64()?;
            let mut per_lang = Vec::with_capacity(nlangs);
            for _ in 0..nlangs {
                let total = r.u64()?;
                let n = r.len(16)?;
                let mut counts = HashMap::with_capacity(n);
                for _ in 0..n {
                    let g = r.str()?;
                    counts.insert(g, r.u64()?);
                }
                per_lang.push(LangCounts { total, counts });
            }
            tables.push(OrderTable { vocab, per_lang });
        }
        r.finish()?;
        Ok(CharNgramModel { order, smoothing, languages, tables })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        crate::pipeline::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, LidError> {
        let buf = std::fs::read(path).map_err(|e| LidError::Io(path.display().to_string(), e))?;
        Self::from_bytes(&buf).map_err(LidError::Format)
    }
}

/// Provider wrapping a trained model at a fixed n-gram order.
pub struct NgramLid {
    id: String,
    model: Arc<CharNgramModel>,
    order: usize,
}

impl NgramLid {
    pub fn new(id: impl Into<String>, model: Arc<CharNgramModel>, order: usize) -> Self {
        NgramLid { id: id.into(), model, order }
    }
}

impl LidProvider for NgramLid {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify(&self, text: &str) -> Result<LidPrediction, LidError> {
        let (language, confidence) = self.model.classify(text, self.order)?;
        Ok(LidPrediction { provider_id: self.id.clone(), language, confidence })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<(&'static str, &'static str)> {
        vec![
            ("hin", "यह एक हिंदी वाक्य है और हम इसे पढ़ रहे हैं"),
            ("hin", "भारत एक विशाल देश है जहाँ अनेक भाषाएँ बोली जाती हैं"),
            ("tam", "இது ஒரு தமிழ் வாக்கியம் நாங்கள் படிக்கிறோம்"),
            ("tam", "வணக்கம் நண்பா எப்படி இருக்கிறீர்கள்"),
            ("eng", "this is an english sentence that we are reading"),
        ]
    }

    #[test]
    fn separates_scripts() {
        let m = CharNgramModel::train(&corpus(), 4, 0.5).unwrap();
        let (l, c) = m.classify("வணக்கம் நண்பா", 4).unwrap();
        assert_eq!(l, "tam");
        assert!(c > 0.0, "confidence {c}");
        for (lang, text) in corpus() {
            assert_eq!(m.classify(text, 4).unwrap().0, lang);
        }
    }

    #[test]
    fn unseen_and_empty() {
        let m = CharNgramModel::train(&corpus(), 4, 0.5).unwrap();
        assert_eq!(m.classify("ਸਤ ਸ੍ਰੀ ਅਕਾਲ", 4).unwrap(), ("und".to_string(), 0.0));
        assert!(matches!(m.classify("", 4), Err(LidError::EmptyText)));
        assert!(CharNgramModel::train(&corpus(), 1, 0.5).is_err());
        assert!(CharNgramModel::train::<&str, &str>(&[], 4, 0.5).is_err());
        assert!(CharNgramModel::train(&[("hindi", "x")], 4, 0.5).is_err());
    }

    #[test]
    fn lower_orders_available() {
        let m = CharNgramModel::train(&corpus(), 4, 0.5).unwrap();
        assert_eq!(m.classify("हिंदी", 2).unwrap().0, "hin");
        assert_eq!(m.classify("a", 2).unwrap().0, "eng");
    }

    #[test]
    fn bytes_round_trip() {
        let m = CharNgramModel::train(&corpus(), 3, 0.25).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(CharNgramModel::from_bytes(&bytes).unwrap(), m);
        assert_eq!(m.to_bytes(), bytes);
        assert!(CharNgramModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(CharNgramModel::from_bytes(&bad), Err(FormatError::BadMagic { .. })));
    }
}
