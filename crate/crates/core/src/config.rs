//! Pipeline configuration.
//!
//! A single TOML file holds global stage settings plus per-language tables.
//! Every field has a default, so an empty file is a valid config. See
//! `docs/config.md` for the full reference.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_script::Script;

use crate::clean::CleanSettings;
use crate::dedup::DedupConfig;
use crate::lang;
use crate::lid::LidSettings;
use crate::lm::LmConfig;
use crate::ocr::{OcrFilterConfig, TriageRules};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterThresholds {
    pub max_nsfw_ratio: f64,
    pub max_non_li_ratio: f64,
    pub min_lines: u64,
    pub min_mean_line_length: f64,
    pub max_word_rep_ratio: f64,
    pub max_char_rep_ratio: f64,
    pub max_symbol_ratio: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            max_nsfw_ratio: 0.02,
            max_non_li_ratio: 0.2,
            min_lines: 2,
            min_mean_line_length: 3.0,
            max_word_rep_ratio: 0.3,
            max_char_rep_ratio: 0.3,
            max_symbol_ratio: 0.5,
        }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ratios = [
            ("max_nsfw_ratio", self.max_nsfw_ratio),
            ("max_non_li_ratio", self.max_non_li_ratio),
            ("max_word_rep_ratio", self.max_word_rep_ratio),
            ("max_char_rep_ratio", self.max_char_rep_ratio),
            ("max_symbol_ratio", self.max_symbol_ratio),
        ];
        for (name, v) in ratios {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::Invalid(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if !(self.min_mean_line_length >= 0.0) {
            return Err(ConfigError::Invalid("min_mean_line_length must be >= 0".into()));
        }
        Ok(())
    }
}

/// 80th-percentile perplexity thresholds shipped as defaults, one per language.
pub const DEFAULT_PPL_THRESHOLDS: &[(&str, f64)] = &[
    ("asm", 1216.0),
    ("ben", 606.7),
    ("guj", 792.5),
    ("hin", 378.8),
    ("kan", 103.4),
    ("mal", 61.4),
    ("mar", 277.8),
    ("nep", 120.32),
    ("ori", 170.8),
    ("pan", 229.7),
    ("san", 1397.7),
    ("tam", 262.3),
    ("tel", 377.0),
    ("urd", 316.8),
];

pub fn default_ppl_threshold(lang: &str) -> Option<f64> {
    DEFAULT_PPL_THRESHOLDS.iter().find(|(l, _)| *l == lang).map(|(_, t)| *t)
}

/// Per-language overrides as written in the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LangSection {
    pub nsfw_lexicon: Option<String>,
    pub allowed_scripts: Option<Vec<String>>,
    pub thresholds: Option<FilterThresholds>,
    pub ppl_threshold: Option<f64>,
    pub terminal_punct: Option<String>,
}

/// Fully resolved settings for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct LangConfig {
    pub language: String,
    pub nsfw_lexicon_path: Option<PathBuf>,
    pub allowed_scripts: Vec<Script>,
    pub thresholds: FilterThresholds,
    pub ppl_threshold: Option<f64>,
    pub terminal_punct: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub shard_size: usize,
    pub thresholds: FilterThresholds,
    pub clean: CleanSettings,
    pub ocr: OcrFilterConfig,
    pub triage: TriageRules,
    pub lid: LidSettings,
    pub dedup: DedupConfig,
    pub lm: LmConfig,
    pub languages: BTreeMap<String, LangSection>,
    /// Directory relative paths in the file resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0x5e70_5e70,
            shard_size: 10_000,
            thresholds: FilterThresholds::default(),
            clean: CleanSettings::default(),
            ocr: OcrFilterConfig::default(),
            triage: TriageRules::default(),
            lid: LidSettings::default(),
            dedup: DedupConfig::default(),
            lm: LmConfig::default(),
            languages: BTreeMap::new(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.shard_size == 0 {
            return Err(ConfigError::Invalid("shard_size must be positive".into()));
        }
        self.thresholds.validate()?;
        self.clean.validate().map_err(ConfigError::Invalid)?;
        self.ocr.validate().map_err(ConfigError::Invalid)?;
        self.lid.validate().map_err(ConfigError::Invalid)?;
        self.dedup.validate().map_err(ConfigError::Invalid)?;
        self.lm.validate().map_err(ConfigError::Invalid)?;
        for code in self.languages.keys() {
            if !crate::model::is_valid_language(code) || code == crate::model::UNDETERMINED {
                return Err(ConfigError::Invalid(format!("unknown language code `{code}`")));
            }
            self.lang(code)?;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Resolves the effective settings for `language`, layering the
    /// language table over global defaults and the built-in script table.
    pub fn lang(&self, language: &str) -> Result<LangConfig, ConfigError> {
        let section = self.languages.get(language).cloned().unwrap_or_default();

        let allowed_scripts = match &section.allowed_scripts {
            Some(names) => names
                .iter()
                .map(|n| {
                    lang::parse_script(n).ok_or_else(|| {
                        ConfigError::Invalid(format!("`{n}` is not a Unicode script ({language})"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => lang::scripts_of(language).map(<[Script]>::to_vec).unwrap_or_default(),
        };
        if allowed_scripts.is_empty() && section.allowed_scripts.is_some() {
            return Err(ConfigError::Invalid(format!("allowed_scripts for {language} is empty")));
        }
        let allowed_scripts =
            if allowed_scripts.is_empty() { vec![Script::Latin] } else { allowed_scripts };

        let thresholds = section.thresholds.clone().unwrap_or_else(|| self.thresholds.clone());
        thresholds.validate()?;

        let ppl_threshold = section.ppl_threshold.or_else(|| default_ppl_threshold(language));
        if let Some(t) = ppl_threshold {
            if !(t.is_finite() && t > 0.0) {
                return Err(ConfigError::Invalid(format!("ppl_threshold for {language} must be > 0")));
            }
        }

        if section.terminal_punct.as_deref().is_some_and(|p| p.trim().is_empty()) {
            return Err(ConfigError::Invalid(format!("terminal_punct for {language} is empty")));
        }

        Ok(LangConfig {
            language: language.to_string(),
            nsfw_lexicon_path: section.nsfw_lexicon.as_deref().map(|p| self.resolve(p)),
            allowed_scripts,
            thresholds,
            ppl_threshold,
            terminal_punct: section.terminal_punct.clone(),
        })
    }

    /// Canonical bytes: the parsed config re-serialized as key-sorted JSON.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_vec(&value).expect("value serializes")
    }

    /// Lowercase hex SHA-256 of [`Config::canonical_bytes`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg, Config::default());
    }

    #[test]
    fn published_thresholds_are_defaults() {
        let cfg = Config::default();
        assert_eq!(cfg.lang("hin").unwrap().ppl_threshold, Some(378.8));
        assert_eq!(cfg.lang("mal").unwrap().ppl_threshold, Some(61.4));
        assert_eq!(cfg.lang("tam").unwrap().ppl_threshold, Some(262.3));
        assert_eq!(cfg.lang("ben").unwrap().ppl_threshold, Some(606.7));
        assert_eq!(cfg.lang("eng").unwrap().ppl_threshold, None);
    }

    #[test]
    fn language_overrides() {
        let cfg = Config::parse(
            r#"
            [thresholds]
            min_lines = 4

            [languages.hin]
            ppl_threshold = 500.0
            allowed_scripts = ["Devanagari", "Latin"]

            [languages.tam.thresholds]
            max_nsfw_ratio = 0.1
            "#,
        )
        .unwrap();
        let hin = cfg.lang("hin").unwrap();
        assert_eq!(hin.ppl_threshold, Some(500.0));
        assert_eq!(hin.allowed_scripts, vec![Script::Devanagari, Script::Latin]);
        assert_eq!(hin.thresholds.min_lines, 4);
        let tam = cfg.lang("tam").unwrap();
        assert_eq!(tam.thresholds.max_nsfw_ratio, 0.1);
        assert_eq!(tam.thresholds.min_lines, 2);
        assert_eq!(tam.allowed_scripts, vec![Script::Tamil]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::parse("[thresholds]\nmax_nsfw_ratio = 1.5").is_err());
        assert!(Config::parse("[languages.hin]\nallowed_scripts = [\"Elvish\"]").is_err());
        assert!(Config::parse("[languages.hin]\nppl_threshold = -1.0").is_err());
        assert!(Config::parse("[languages.xyzw]").is_err());
        assert!(Config::parse("bogus_key = 1").is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = Config::default();
        let b = Config::parse("seed = 1").unwrap();
        assert_eq!(a.hash(), Config::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        assert!(a.hash().chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }
}
