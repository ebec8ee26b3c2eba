//! Stage orchestration over shard directories.
//!
//! Every stage reads the documents written by the previous document stage
//! of the run (or the input directory for the first stage), writes its
//! kept documents to `output/<stage>/shard-XXXXX.jsonl`, its drops to
//! `rejected.jsonl`, and finally `manifest.json`. The manifest is written
//! last, so a stage directory with a manifest is complete. A stage whose
//! manifest records the same config and input hashes is skipped.

pub mod logging;
pub mod shards;
pub mod stages;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::manifest::Manifest;
use crate::model::is_valid_language;

pub use logging::init_logging;

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {cause}")]
    Stage { stage: String, cause: String },
    #[error("io error: {0}")]
    Io(String),
}

impl PipelineError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Stage { .. } | PipelineError::Io(_) => 2,
        }
    }

    fn in_stage(self, stage: PipelineStage) -> Self {
        match self {
            PipelineError::Io(cause) => PipelineError::Stage { stage: stage.name().into(), cause },
            other => other,
        }
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PipelineStage {
    Prepare,
    Clean,
    Lid,
    Analyze,
    Flag,
    Dedup,
    LmTrain,
    Calibrate,
    PplFilter,
}

impl PipelineStage {
    pub const ALL: [PipelineStage; 9] = [
        PipelineStage::Prepare,
        PipelineStage::Clean,
        PipelineStage::Lid,
        PipelineStage::Analyze,
        PipelineStage::Flag,
        PipelineStage::Dedup,
        PipelineStage::LmTrain,
        PipelineStage::Calibrate,
        PipelineStage::PplFilter,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PipelineStage::Prepare => "prepare",
            PipelineStage::Clean => "clean",
            PipelineStage::Lid => "lid",
            PipelineStage::Analyze => "analyze",
            PipelineStage::Flag => "flag",
            PipelineStage::Dedup => "dedup",
            PipelineStage::LmTrain => "lm-train",
            PipelineStage::Calibrate => "calibrate",
            PipelineStage::PplFilter => "ppl-filter",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Whether the stage writes a document shard set. Model training and
    /// calibration pass documents through untouched.
    pub fn writes_documents(&self) -> bool {
        !matches!(self, PipelineStage::LmTrain | PipelineStage::Calibrate)
    }
}

/// Which raw sources `prepare` reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrepareSources {
    /// `web/`, `ocr/`, `srt/`, `asr/` subdirectories plus top-level `.jsonl`.
    All,
    /// OCR JSON files (and `pdf_meta.jsonl`) directly in the input directory.
    OcrOnly,
    /// `.srt` files directly in the input directory.
    SrtOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub stages: Vec<PipelineStage>,
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Languages to keep after identification; empty keeps all.
    pub languages: Vec<String>,
    pub workers: usize,
    /// Overrides `seed` from the config.
    pub seed: Option<u64>,
    pub prepare_sources: PrepareSources,
    /// Fixed perplexity threshold for every language, bypassing calibration.
    pub ppl_threshold: Option<f64>,
}

impl PipelineSpec {
    pub fn new(stages: Vec<PipelineStage>, input_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        PipelineSpec {
            stages,
            input_dir: input_dir.into(),
            output_dir: output_dir.into(),
            languages: Vec::new(),
            workers: 1,
            seed: None,
            prepare_sources: PrepareSources::All,
            ppl_threshold: None,
        }
    }

    pub fn full(input_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self::new(PipelineStage::ALL.to_vec(), input_dir, output_dir)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.stages.is_empty() {
            return Err(PipelineError::Config("no stages selected".into()));
        }
        if self.stages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PipelineError::Config("stages must be distinct and in pipeline order".into()));
        }
        if self.workers == 0 {
            return Err(PipelineError::Config("workers must be at least 1".into()));
        }
        if !self.input_dir.is_dir() {
            return Err(PipelineError::Config(format!("input directory {} does not exist", self.input_dir.display())));
        }
        for l in &self.languages {
            if !is_valid_language(l) || l == crate::model::UNDETERMINED {
                return Err(PipelineError::Config(format!("invalid language code `{l}`")));
            }
        }
        if let Some(t) = self.ppl_threshold {
            if !(t.is_finite() && t > 0.0) {
                return Err(PipelineError::Config("perplexity threshold must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn stage_dir(&self, stage: PipelineStage) -> PathBuf {
        self.output_dir.join(stage.name())
    }
}

/// Stage attrition for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub stages: Vec<StageSummary>,
    pub input_docs: u64,
    pub output_docs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub input_count: u64,
    pub output_count: u64,
    pub dropped_by_reason: std::collections::BTreeMap<String, u64>,
    /// Percentage of the stage's input it dropped.
    pub drop_percent: f64,
}

impl Summary {
    pub fn from_manifests(manifests: &[Manifest]) -> Self {
        let stages = manifests
            .iter()
            .map(|m| StageSummary {
                stage: m.stage.clone(),
                input_count: m.input_count,
                output_count: m.output_count,
                dropped_by_reason: m.dropped_by_reason.clone(),
                drop_percent: if m.input_count == 0 {
                    0.0
                } else {
                    (m.dropped() as f64 * 10_000.0 / m.input_count as f64).round() / 100.0
                },
            })
            .collect();
        Summary {
            stages,
            input_docs: manifests.first().map_or(0, |m| m.input_count),
            output_docs: manifests.last().map_or(0, |m| m.output_count),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifests: Vec<Manifest>,
    /// Stages skipped because their outputs were up to date.
    pub skipped: Vec<PipelineStage>,
    pub summary: Summary,
}

/// Hash of everything that shapes stage outputs: the config, the seed and
/// the language selection. Worker count is deliberately excluded.
pub fn run_config_hash(cfg: &Config, spec: &PipelineSpec) -> String {
    let mut h = Sha256::new();
    h.update(cfg.hash().as_bytes());
    h.update(b"\0languages:");
    h.update(spec.languages.join(",").as_bytes());
    h.update(b"\0prepare:");
    h.update(format!("{:?}", spec.prepare_sources).as_bytes());
    h.update(b"\0ppl_threshold:");
    h.update(format!("{:?}", spec.ppl_threshold).as_bytes());
    hex::encode(h.finalize())
}

pub fn read_manifest(path: &Path) -> Option<Manifest> {
    let bytes = std::fs::read(path).ok()?;
    serde_json::from_slice(&bytes).ok()
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

/// Runs the selected stages in order. Later stages do not run after a
/// failure.
pub fn run(spec: &PipelineSpec, cfg: &Config) -> Result<RunReport, PipelineError> {
    spec.validate()?;
    let mut cfg = cfg.clone();
    if let Some(seed) = spec.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&spec.output_dir)
        .map_err(|e| PipelineError::Config(format!("cannot create {}: {e}", spec.output_dir.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("cannot start worker pool: {e}")))?;
    let config_hash = run_config_hash(&cfg, spec);
    let ctx = stages::Context::new(spec, &cfg)?;

    let mut manifests = Vec::new();
    let mut skipped = Vec::new();
    let mut docs_dir = spec.input_dir.clone();
    for &stage in &spec.stages {
        let dir = spec.stage_dir(stage);
        let input_hash = stages::input_hash(&ctx, stage, &docs_dir).map_err(|e| e.in_stage(stage))?;
        let manifest_path = dir.join(shards::MANIFEST_FILE);
        let previous = read_manifest(&manifest_path);
        let manifest = match previous {
            Some(m) if m.config_hash == config_hash && m.input_hash == input_hash => {
                log::info!(target: stage.name(), "outputs up to date; skipping");
                skipped.push(stage);
                m
            }
            _ => {
                log::info!(target: stage.name(), "starting");
                // A stale manifest must not outlive the outputs it described.
                if manifest_path.exists() {
                    std::fs::remove_file(&manifest_path)
                        .map_err(|e| PipelineError::Io(format!("{}: {e}", manifest_path.display())).in_stage(stage))?;
                }
                let mut m = pool
                    .install(|| stages::run_stage(&ctx, stage, &docs_dir, &dir))
                    .map_err(|e| e.in_stage(stage))?;
                m.config_hash = config_hash.clone();
                m.input_hash = input_hash;
                write_atomic(&manifest_path, &to_pretty_json(&m))
                    .map_err(|e| PipelineError::Stage { stage: stage.name().into(), cause: e.to_string() })?;
                log::info!(
                    target: stage.name(),
                    "done: {} in, {} out, {} dropped",
                    m.input_count,
                    m.output_count,
                    m.dropped()
                );
                m
            }
        };
        manifests.push(manifest);
        if stage.writes_documents() {
            docs_dir = dir;
        }
    }

    let summary = Summary::from_manifests(&manifests);
    let path = spec.output_dir.join("summary.json");
    write_atomic(&path, &to_pretty_json(&summary)).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    Ok(RunReport { manifests, skipped, summary })
}
