//! Per-stage attrition accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Stage, StageVerdict};

#[derive(Debug, Error, PartialEq)]
pub enum ManifestError {
    #[error("verdict for stage `{found}` passed to manifest of stage `{expected}`")]
    StageMismatch { expected: String, found: String },
    #[error("{dropped} drops recorded for only {input} input documents")]
    Overflow { input: u64, dropped: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub input_count: u64,
    pub output_count: u64,
    pub dropped_by_reason: BTreeMap<String, u64>,
    #[serde(default)]
    pub config_hash: String,
    /// SHA-256 over the stage's input shards, used to detect no-op reruns.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub input_hash: String,
}

impl Manifest {
    pub fn dropped(&self) -> u64 {
        self.dropped_by_reason.values().sum()
    }

    /// `output_count == input_count - Σ dropped`.
    pub fn is_consistent(&self) -> bool {
        self.input_count >= self.dropped() && self.output_count == self.input_count - self.dropped()
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.config_hash = hash.into();
        self
    }

    /// Manifest for a stage that only passes documents through.
    pub fn passthrough(stage: &str, count: u64) -> Self {
        Manifest {
            stage: stage.to_string(),
            input_count: count,
            output_count: count,
            dropped_by_reason: BTreeMap::new(),
            config_hash: String::new(),
            input_hash: String::new(),
        }
    }
}

/// Builds the manifest of `stage` from its verdicts.
///
/// Each drop verdict is tallied once, under its first reason. Documents
/// with no verdict count as kept.
pub fn write_manifest(
    stage: Stage,
    in_docs: u64,
    verdicts: &[StageVerdict],
) -> Result<Manifest, ManifestError> {
    let mut dropped_by_reason = BTreeMap::new();
    for v in verdicts {
        if v.stage != stage {
            return Err(ManifestError::StageMismatch {
                expected: stage.to_string(),
                found: v.stage.to_string(),
            });
        }
        if !v.kept {
            let key = v.reasons.first().cloned().unwrap_or_else(|| "unspecified".to_string());
            *dropped_by_reason.entry(key).or_insert(0u64) += 1;
        }
    }
    let dropped: u64 = dropped_by_reason.values().sum();
    if dropped > in_docs {
        return Err(ManifestError::Overflow { input: in_docs, dropped });
    }
    Ok(Manifest {
        stage: stage.to_string(),
        input_count: in_docs,
        output_count: in_docs - dropped,
        dropped_by_reason,
        config_hash: String::new(),
        input_hash: String::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tallies_first_reason() {
        let mut verdicts = vec![StageVerdict::keep(Stage::Flag, 0); 7];
        verdicts.push(StageVerdict::drop_one(Stage::Flag, "nsfw_ratio", 0));
        verdicts.push(StageVerdict::drop(
            Stage::Flag,
            vec!["nsfw_ratio".into(), "word_rep".into()],
            0,
        ));
        verdicts.push(StageVerdict::drop_one(Stage::Flag, "line_count", 0));
        let m = write_manifest(Stage::Flag, 10, &verdicts).unwrap();
        assert_eq!(m.output_count, 7);
        assert_eq!(m.dropped_by_reason["nsfw_ratio"], 2);
        assert_eq!(m.dropped_by_reason["line_count"], 1);
        assert_eq!(m.dropped_by_reason.len(), 2);
        assert!(m.is_consistent());
    }

    #[test]
    fn empty_corpus() {
        let m = write_manifest(Stage::Clean, 0, &[]).unwrap();
        assert_eq!((m.input_count, m.output_count), (0, 0));
        assert!(m.dropped_by_reason.is_empty());
    }

    #[test]
    fn all_pass() {
        let v = vec![StageVerdict::keep(Stage::Lid, 0); 5];
        let m = write_manifest(Stage::Lid, 5, &v).unwrap();
        assert_eq!(m.output_count, 5);
        assert!(m.dropped_by_reason.is_empty());
    }

    #[test]
    fn stage_mismatch() {
        let v = vec![StageVerdict::keep(Stage::Lid, 0)];
        assert!(matches!(
            write_manifest(Stage::Flag, 1, &v),
            Err(ManifestError::StageMismatch { .. })
        ));
    }
}
