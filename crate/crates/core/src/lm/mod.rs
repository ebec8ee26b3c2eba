//! Perplexity filtering: normalization, tokenizer, Kneser-Ney model,
//! percentile calibration.

pub mod bpe;
pub mod calibrate;
pub mod format;
pub mod kn;
pub mod normalize;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bpe::{Tokenizer, TokenizerKind};
pub use calibrate::{calibrate_threshold, ppl_keep};
pub use format::{load_model, load_model_file, save_model, serialize_model};
pub use kn::KnModel;
pub use normalize::{normalize, NormalizationConfig};

use crate::binfmt::FormatError;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("{0}")]
    Invalid(String),
    #[error("tokenizer corpus has no words")]
    CorpusTooSmall,
    #[error("{tokens} tokens cannot train an order-{order} model")]
    InsufficientData { tokens: usize, order: usize },
    #[error("text is empty after normalization")]
    EmptyAfterNormalization,
    #[error("no perplexities to calibrate on")]
    EmptyInput,
    #[error("n-gram hash collision at order {order}")]
    HashCollision { order: usize },
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("bad model file: {0}")]
    Format(FormatError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub order: usize,
    pub tokenizer: TokenizerKind,
    pub vocab_size: usize,
    /// Documents sampled per language for training.
    pub train_docs: usize,
    /// Documents sampled per language for threshold calibration.
    pub validation_docs: usize,
    pub percentile: f64,
    /// Languages with fewer documents get no model and skip the filter.
    pub min_train_docs: usize,
    /// Filter with the calibrated threshold rather than the configured one.
    pub use_calibrated: bool,
    pub normalization: NormalizationConfig,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 5,
            tokenizer: TokenizerKind::Bpe,
            vocab_size: 8000,
            train_docs: 200_000,
            validation_docs: 100_000,
            percentile: 80.0,
            min_train_docs: 10,
            use_calibrated: true,
            normalization: NormalizationConfig::default(),
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(2..=5).contains(&self.order) {
            return Err("lm.order must be between 2 and 5".into());
        }
        if self.vocab_size < bpe::MIN_VOCAB {
            return Err(format!("lm.vocab_size must be at least {}", bpe::MIN_VOCAB));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err("lm.percentile must be in (0, 100)".into());
        }
        if self.train_docs == 0 || self.validation_docs == 0 {
            return Err("lm.train_docs and lm.validation_docs must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PplRecord {
    pub doc_id: String,
    pub perplexity: f64,
    pub token_count: usize,
}

/// Everything needed to score text: normalization, tokenizer, n-gram model.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    pub normalization: NormalizationConfig,
    pub tokenizer: Tokenizer,
    pub kn: KnModel,
}

fn sentences(normalized: &str) -> impl Iterator<Item = &str> {
    normalized.lines().map(str::trim).filter(|l| !l.is_empty())
}

impl LanguageModel {
    /// Normalizes `texts`, trains the tokenizer on them, then the n-gram
    /// model on their tokenized lines.
    pub fn train<S: AsRef<str> + Sync>(texts: &[S], cfg: &LmConfig) -> Result<Self, LmError> {
        let normalized: Vec<String> = texts.par_iter().map(|t| normalize(t.as_ref(), &cfg.normalization)).collect();
        let tokenizer = Tokenizer::train(&normalized, cfg.tokenizer, cfg.vocab_size)?;
        let sents: Vec<Vec<u32>> = normalized
            .par_iter()
            .flat_map_iter(|t| sentences(t).map(|s| tokenizer.tokenize(s)).collect::<Vec<_>>())
            .collect();
        let kn = KnModel::train(&sents, cfg.order)?;
        Ok(LanguageModel { normalization: cfg.normalization, tokenizer, kn })
    }

    /// `10^(-sum log10 P / N)` over all lines, counting one `</s>` per line.
    pub fn perplexity(&self, text: &str) -> Result<(f64, usize), LmError> {
        let normalized = normalize(text, &self.normalization);
        let (mut total, mut n) = (0.0, 0usize);
        for s in sentences(&normalized) {
            let (lp, k) = self.kn.sentence_log10(&self.tokenizer.tokenize(s));
            total += lp;
            n += k;
        }
        if n == 0 {
            return Err(LmError::EmptyAfterNormalization);
        }
        Ok((10f64.powf(-total / n as f64), n))
    }

    pub fn score(&self, doc_id: &str, text: &str) -> Result<PplRecord, LmError> {
        let (perplexity, token_count) = self.perplexity(text)?;
        Ok(PplRecord { doc_id: doc_id.to_string(), perplexity, token_count })
    }
}
