//! Language identification.
//!
//! Three providers vote: a preferred specialist and two generalists. The
//! built-in providers are `script` (unique-script detector), `ngram`
//! (character n-gram model at the configured order) and `ngram2` (the same
//! model at order 2). Any other id must be configured as a subprocess.

pub mod ensemble;
pub mod ngram;
pub mod script;

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ensemble::{ensemble_identify, script_consistent, Decision, EnsembleConfig};
pub use ngram::{CharNgramModel, NgramLid};
pub use script::{script_detect, ScriptHistogram, ScriptLid};

use crate::binfmt::FormatError;
use crate::model::UNDETERMINED;
use crate::provider::{string_field, JsonlProcess, ProviderError};

#[derive(Debug, Error)]
pub enum LidError {
    #[error("text is empty")]
    EmptyText,
    #[error("text has no letters")]
    NoLetters,
    #[error("no prediction from provider `{0}`")]
    MissingProvider(String),
    #[error("unknown provider `{0}`")]
    UnknownProvider(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("cannot read {0}: {1}")]
    Io(String, std::io::Error),
    #[error("bad model file: {0}")]
    Format(FormatError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidPrediction {
    pub provider_id: String,
    pub language: String,
    pub confidence: f64,
}

impl LidPrediction {
    pub fn undetermined(provider_id: &str) -> Self {
        LidPrediction { provider_id: provider_id.into(), language: UNDETERMINED.into(), confidence: 0.0 }
    }
}

pub trait LidProvider: Send + Sync {
    fn id(&self) -> &str;
    fn classify(&self, text: &str) -> Result<LidPrediction, LidError>;
}

/// Subprocess provider: `{"text"}` in, `{"language", "confidence"}` out.
pub struct SubprocessLid {
    id: String,
    process: JsonlProcess,
}

impl SubprocessLid {
    pub fn spawn(id: &str, argv: &[String]) -> Result<Self, LidError> {
        Ok(SubprocessLid { id: id.to_string(), process: JsonlProcess::spawn(argv)? })
    }
}

impl LidProvider for SubprocessLid {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify(&self, text: &str) -> Result<LidPrediction, LidError> {
        let resp = self.process.call(&serde_json::json!({ "text": text }))?;
        let language = string_field(&resp, "language")?;
        let confidence = resp
            .get("confidence")
            .and_then(serde_json::Value::as_f64)
            .filter(|c| (0.0..=1.0).contains(c))
            .ok_or_else(|| ProviderError::Protocol("confidence must be a number in [0, 1]".into()))?;
        if !crate::model::is_valid_language(&language) {
            return Err(ProviderError::Protocol(format!("invalid language `{language}`")).into());
        }
        Ok(LidPrediction { provider_id: self.id.clone(), language, confidence })
    }
}

/// LID settings as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidSettings {
    pub specialist: String,
    pub generalists: Vec<String>,
    pub override_confidence: f64,
    pub min_specialist_confidence: f64,
    /// Share of letters the chosen language's script must reach.
    pub min_script_fraction: f64,
    /// Trained n-gram model file.
    pub model: Option<String>,
    /// JSONL of `{"language", "text"}` rows; trains the model in-process
    /// when no model file is given.
    pub training_data: Option<String>,
    pub order: usize,
    pub smoothing: f64,
    /// Subprocess providers by id, as argv.
    pub providers: BTreeMap<String, Vec<String>>,
}

impl Default for LidSettings {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        LidSettings {
            specialist: e.specialist_id,
            generalists: e.generalist_ids.to_vec(),
            override_confidence: e.override_confidence,
            min_specialist_confidence: e.min_specialist_confidence,
            min_script_fraction: 0.5,
            model: None,
            training_data: None,
            order: 4,
            smoothing: 0.5,
            providers: BTreeMap::new(),
        }
    }
}

impl LidSettings {
    pub fn ensemble(&self) -> Result<EnsembleConfig, String> {
        let [g1, g2] = <[String; 2]>::try_from(self.generalists.clone())
            .map_err(|_| "lid.generalists must name exactly two providers".to_string())?;
        let cfg = EnsembleConfig {
            specialist_id: self.specialist.clone(),
            generalist_ids: [g1, g2],
            override_confidence: self.override_confidence,
            min_specialist_confidence: self.min_specialist_confidence,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.ensemble()?;
        if !(0.0..=1.0).contains(&self.min_script_fraction) {
            return Err("lid.min_script_fraction must be in [0, 1]".into());
        }
        if !(2..=16).contains(&self.order) {
            return Err("lid.order must be between 2 and 16".into());
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err("lid.smoothing must be positive".into());
        }
        for (id, argv) in &self.providers {
            if argv.is_empty() {
                return Err(format!("lid.providers.{id} has an empty command"));
            }
            if matches!(id.as_str(), "script" | "ngram" | "ngram2") {
                return Err(format!("lid.providers.{id} shadows a built-in provider"));
            }
        }
        Ok(())
    }

    fn needs_model(&self) -> bool {
        let mut ids = self.generalists.iter().chain(std::iter::once(&self.specialist));
        ids.any(|id| id == "ngram" || id == "ngram2")
    }
}

/// Reads `{"language", "text"}` rows.
pub fn read_training_data<R: BufRead>(reader: R) -> Result<Vec<(String, String)>, LidError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| LidError::Io(format!("training line {}", i + 1), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| LidError::Training(format!("line {}: {e}", i + 1)))?;
        let field = |f: &str| {
            v.get(f)
                .and_then(serde_json::Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| LidError::Training(format!("line {}: missing `{f}`", i + 1)))
        };
        rows.push((field("language")?, field("text")?));
    }
    Ok(rows)
}

pub fn train_from_file(path: &Path, order: usize, smoothing: f64) -> Result<CharNgramModel, LidError> {
    let file = std::fs::File::open(path).map_err(|e| LidError::Io(path.display().to_string(), e))?;
    let rows = read_training_data(std::io::BufReader::new(file))?;
    CharNgramModel::train(&rows, order, smoothing)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LidOutcome {
    pub language: String,
    /// `specialist`, `generalist_override`, `low_confidence`,
    /// `script_mismatch` or `no_letters`.
    pub reason: &'static str,
    pub predictions: Vec<LidPrediction>,
    pub script: Option<String>,
    pub script_fraction: f64,
}

/// The assembled ensemble.
pub struct LanguageIdentifier {
    providers: Vec<Box<dyn LidProvider>>,
    cfg: EnsembleConfig,
    min_script_fraction: f64,
}

impl LanguageIdentifier {
    pub fn new(
        providers: Vec<Box<dyn LidProvider>>,
        cfg: EnsembleConfig,
        min_script_fraction: f64,
    ) -> Result<Self, LidError> {
        cfg.validate().map_err(LidError::Training)?;
        let ids = std::iter::once(&cfg.specialist_id).chain(cfg.generalist_ids.iter());
        for id in ids {
            if !providers.iter().any(|p| p.id() == id) {
                return Err(LidError::MissingProvider(id.clone()));
            }
        }
        Ok(LanguageIdentifier { providers, cfg, min_script_fraction })
    }

    /// Builds the providers named in `settings`. `model` is required when
    /// an n-gram provider is named.
    pub fn from_settings(settings: &LidSettings, model: Option<Arc<CharNgramModel>>) -> Result<Self, LidError> {
        let cfg = settings.ensemble().map_err(LidError::Training)?;
        if settings.needs_model() && model.is_none() {
            return Err(LidError::Training("an n-gram provider is selected but no model is configured".into()));
        }
        let mut providers: Vec<Box<dyn LidProvider>> = Vec::new();
        for id in std::iter::once(&cfg.specialist_id).chain(cfg.generalist_ids.iter()) {
            let p: Box<dyn LidProvider> = match id.as_str() {
                "script" => Box::new(ScriptLid),
                "ngram" => {
                    let m = model.clone().expect("checked above");
                    let order = m.order();
                    Box::new(NgramLid::new("ngram", m, order))
                }
                "ngram2" => Box::new(NgramLid::new("ngram2", model.clone().expect("checked above"), 2)),
                other => match settings.providers.get(other) {
                    Some(argv) => Box::new(SubprocessLid::spawn(other, argv)?),
                    None => return Err(LidError::UnknownProvider(other.to_string())),
                },
            };
            providers.push(p);
        }
        Self::new(providers, cfg, settings.min_script_fraction)
    }

    pub fn identify(&self, text: &str) -> Result<LidOutcome, LidError> {
        let hist = ScriptHistogram::of(text);
        let (script, script_fraction) = match hist.dominant() {
            Some((s, f)) => (Some(s.full_name().to_string()), f),
            None => (None, 0.0),
        };
        if hist.letters == 0 {
            return Ok(LidOutcome {
                language: UNDETERMINED.into(),
                reason: "no_letters",
                predictions: Vec::new(),
                script,
                script_fraction,
            });
        }
        let predictions = self
            .providers
            .iter()
            .map(|p| {
                let mut pred = p.classify(text)?;
                pred.provider_id = p.id().to_string();
                Ok(pred)
            })
            .collect::<Result<Vec<_>, LidError>>()?;
        let (mut language, decision) = ensemble_identify(&predictions, &self.cfg)?;
        let mut reason = decision.as_str();
        if language != UNDETERMINED && !script_consistent(&language, &hist, self.min_script_fraction) {
            language = UNDETERMINED.into();
            reason = "script_mismatch";
        }
        Ok(LidOutcome { language, reason, predictions, script, script_fraction })
    }
}
