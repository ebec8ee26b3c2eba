//! Model file: normalization flags, tokenizer and n-gram tables.
//!
//! Layout after the `SETULM01` magic and `u32` version: five normalization
//! flag bytes, the tokenizer block, then the order, the sorted vocabulary,
//! one discount per order, and per order a hash-sorted array of
//! `(hash u64, log10 p f64, log10 backoff f64)` records. Little-endian.

use std::path::Path;

use super::bpe::Tokenizer;
use super::kn::KnModel;
use super::normalize::NormalizationConfig;
use super::LanguageModel;
use crate::binfmt::{FormatError, Reader, Writer};

pub const MAGIC: &[u8; 8] = b"SETULM01";
pub const VERSION: u32 = 1;

pub fn serialize_model(model: &LanguageModel) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    let n = &model.normalization;
    for flag in [n.lowercase, n.strip_accents, n.digits_to_zero, n.unicode_punct_to_ascii, n.remove_non_printing] {
        w.u8(flag as u8);
    }
    model.tokenizer.write(&mut w);
    model.kn.write(&mut w);
    w.finish()
}

pub fn load_model(bytes: &[u8]) -> Result<LanguageModel, FormatError> {
    let mut r = Reader::open(bytes, MAGIC, VERSION)?;
    let mut flag = || -> Result<bool, FormatError> {
        match r.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(FormatError::Corrupt(format!("flag byte {v}"))),
        }
    };
    let normalization = NormalizationConfig {
        lowercase: flag()?,
        strip_accents: flag()?,
        digits_to_zero: flag()?,
        unicode_punct_to_ascii: flag()?,
        remove_non_printing: flag()?,
    };
    let tokenizer = Tokenizer::read(&mut r)?;
    let kn = KnModel::read(&mut r)?;
    r.finish()?;
    Ok(LanguageModel { normalization, tokenizer, kn })
}

pub fn save_model(model: &LanguageModel, path: &Path) -> std::io::Result<()> {
    crate::pipeline::write_atomic(path, &serialize_model(model))
}

pub fn load_model_file(path: &Path) -> Result<LanguageModel, super::LmError> {
    let bytes = std::fs::read(path).map_err(|e| super::LmError::Io(path.display().to_string(), e))?;
    load_model(&bytes).map_err(super::LmError::Format)
}
