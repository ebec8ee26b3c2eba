//! Specialist-preferred ensemble with generalist override.

use serde::Serialize;
use unicode_script::Script;

use super::script::ScriptHistogram;
use super::{LidError, LidPrediction};
use crate::lang;
use crate::model::UNDETERMINED;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub specialist_id: String,
    pub generalist_ids: [String; 2],
    pub override_confidence: f64,
    pub min_specialist_confidence: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            specialist_id: "ngram".into(),
            generalist_ids: ["script".into(), "ngram2".into()],
            override_confidence: 0.9,
            min_specialist_confidence: 0.5,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.generalist_ids.contains(&self.specialist_id) {
            return Err(format!("specialist `{}` is also a generalist", self.specialist_id));
        }
        if !(self.override_confidence > 0.0 && self.override_confidence <= 1.0) {
            return Err("override_confidence must be in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.min_specialist_confidence) {
            return Err("min_specialist_confidence must be in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Specialist,
    GeneralistOverride,
    LowConfidence,
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Specialist => "specialist",
            Decision::GeneralistOverride => "generalist_override",
            Decision::LowConfidence => "low_confidence",
        }
    }
}

fn find<'a>(preds: &'a [LidPrediction], id: &str) -> Result<&'a LidPrediction, LidError> {
    preds.iter().find(|p| p.provider_id == id).ok_or_else(|| LidError::MissingProvider(id.to_string()))
}

/// Picks the specialist's language unless both generalists agree on a
/// different determined language with confidence at or above the override
/// threshold. Without an override, a specialist below its minimum
/// confidence yields "und".
pub fn ensemble_identify(preds: &[LidPrediction], cfg: &EnsembleConfig) -> Result<(String, Decision), LidError> {
    let s = find(preds, &cfg.specialist_id)?;
    let g1 = find(preds, &cfg.generalist_ids[0])?;
    let g2 = find(preds, &cfg.generalist_ids[1])?;

    let overrides = g1.language == g2.language
        && g1.language != s.language
        && g1.language != UNDETERMINED
        && g1.confidence >= cfg.override_confidence
        && g2.confidence >= cfg.override_confidence;
    if overrides {
        return Ok((g1.language.clone(), Decision::GeneralistOverride));
    }
    if s.confidence < cfg.min_specialist_confidence || s.language == UNDETERMINED {
        return Ok((UNDETERMINED.to_string(), Decision::LowConfidence));
    }
    Ok((s.language.clone(), Decision::Specialist))
}

/// Whether one of `language`'s scripts covers at least `min_fraction` of the
/// document's letters. Languages without a known script never pass.
pub fn script_consistent(language: &str, hist: &ScriptHistogram, min_fraction: f64) -> bool {
    let scripts: &[Script] = lang::scripts_of(language).unwrap_or(&[]);
    scripts.iter().any(|s| hist.fraction(*s) >= min_fraction)
}
