//! The work of each stage. Per-document stages map documents in parallel;
//! dedup, LM training and calibration group documents by language and
//! reduce deterministically.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use super::shards::{self, REJECTED_FILE};
use super::{to_pretty_json, write_atomic, PipelineError, PipelineSpec, PipelineStage, PrepareSources};
use crate::analyze::{compute_stats, NsfwLexicon};
use crate::clean::{clean_document, CleanConfig};
use crate::config::{Config, LangConfig};
use crate::dedup::{dedup, write_audit, DedupDoc};
use crate::flag::apply_filters;
use crate::lid::{train_from_file, CharNgramModel, LanguageIdentifier};
use crate::lm::{calibrate_threshold, load_model_file, ppl_keep, save_model, LanguageModel, LmConfig};
use crate::manifest::{write_manifest, Manifest};
use crate::model::{parse_line, Document, Source, Stage, StageVerdict, UNDETERMINED};
use crate::ocr::{process_pages, triage_pdf, vision::parse_pages, PdfMeta, TriageVerdict};
use crate::speech::{merge_chunks, srt_document, IdentityPunctuator, TranscriptChunk};

/// Verdict timestamps are fixed so that reruns are byte-identical.
const TIMESTAMP: i64 = 0;

pub const MODELS_FILE: &str = "models.json";
pub const THRESHOLDS_FILE: &str = "thresholds.json";

pub struct Context<'a> {
    pub spec: &'a PipelineSpec,
    pub cfg: &'a Config,
}

impl<'a> Context<'a> {
    pub fn new(spec: &'a PipelineSpec, cfg: &'a Config) -> Result<Self, PipelineError> {
        for l in &spec.languages {
            cfg.lang(l)?;
        }
        Ok(Context { spec, cfg })
    }

    fn lang(&self, language: &str) -> Result<LangConfig, PipelineError> {
        Ok(self.cfg.lang(language)?)
    }

    fn langs_of(&self, docs: &[Document]) -> Result<BTreeMap<String, LangConfig>, PipelineError> {
        let codes: BTreeSet<&str> = docs.iter().map(|d| d.language.as_str()).collect();
        codes.into_iter().map(|l| Ok((l.to_string(), self.lang(l)?))).collect()
    }
}

fn stage_err(stage: PipelineStage, cause: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage { stage: stage.name().into(), cause: cause.to_string() }
}

fn verdict_stage(stage: PipelineStage) -> Option<Stage> {
    Some(match stage {
        PipelineStage::Prepare => Stage::Prepare,
        PipelineStage::Clean => Stage::Clean,
        PipelineStage::Lid => Stage::Lid,
        PipelineStage::Analyze => Stage::Analyze,
        PipelineStage::Flag => Stage::Flag,
        PipelineStage::Dedup => Stage::Dedup,
        PipelineStage::PplFilter => Stage::Ppl,
        PipelineStage::LmTrain | PipelineStage::Calibrate => return None,
    })
}

/// Hash of the stage's inputs: its document files plus any model, lexicon
/// or threshold files it reads.
pub fn input_hash(ctx: &Context, stage: PipelineStage, docs_dir: &Path) -> Result<String, PipelineError> {
    let io = PipelineError::Io;
    let mut parts = Vec::new();
    if stage == PipelineStage::Prepare {
        parts.push(shards::hash_tree(&ctx.spec.input_dir).map_err(io)?);
    } else {
        parts.push(shards::hash_files(&shards::document_files(docs_dir).map_err(io)?).map_err(io)?);
    }
    let mut aux: Vec<PathBuf> = Vec::new();
    match stage {
        PipelineStage::Lid => {
            let lid = &ctx.cfg.lid;
            aux.extend(lid.model.iter().chain(&lid.training_data).map(|p| ctx.cfg.resolve(p)));
        }
        PipelineStage::Analyze | PipelineStage::Flag => {
            for section in ctx.cfg.languages.values() {
                aux.extend(section.nsfw_lexicon.iter().map(|p| ctx.cfg.resolve(p)));
            }
        }
        PipelineStage::Calibrate | PipelineStage::PplFilter => {
            let lm_dir = ctx.spec.stage_dir(PipelineStage::LmTrain);
            if lm_dir.is_dir() {
                aux.extend(shards::list_files(&lm_dir, |_| true).map_err(io)?);
            }
            let th = ctx.spec.stage_dir(PipelineStage::Calibrate).join(THRESHOLDS_FILE);
            if stage == PipelineStage::PplFilter && th.exists() {
                aux.push(th);
            }
        }
        _ => {}
    }
    aux.retain(|p| p.exists());
    parts.push(shards::hash_files(&aux).map_err(io)?);
    Ok(parts.join(":"))
}

pub fn run_stage(ctx: &Context, stage: PipelineStage, docs_dir: &Path, out_dir: &Path) -> Result<Manifest, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|e| stage_err(stage, e))?;
    if stage == PipelineStage::Prepare {
        let docs = prepare(ctx, out_dir)?;
        return finalize(ctx, stage, docs, out_dir);
    }
    let files = shards::document_files(docs_dir).map_err(|e| stage_err(stage, e))?;
    let docs = shards::read_files(&files).map_err(|e| stage_err(stage, e))?;
    match stage {
        PipelineStage::Prepare => unreachable!(),
        PipelineStage::Clean => finalize(ctx, stage, clean(ctx, docs)?, out_dir),
        PipelineStage::Lid => finalize(ctx, stage, lid(ctx, docs)?, out_dir),
        PipelineStage::Analyze => finalize(ctx, stage, analyze(ctx, docs)?, out_dir),
        PipelineStage::Flag => finalize(ctx, stage, flag(ctx, docs)?, out_dir),
        PipelineStage::Dedup => {
            let docs = dedup_stage(ctx, docs, out_dir)?;
            finalize(ctx, stage, docs, out_dir)
        }
        PipelineStage::LmTrain => lm_train(ctx, &docs, out_dir),
        PipelineStage::Calibrate => calibrate(ctx, &docs, out_dir),
        PipelineStage::PplFilter => {
            let docs = ppl_filter(ctx, docs)?;
            finalize(ctx, stage, docs, out_dir)
        }
    }
}

/// Writes kept documents as shards and drops to `rejected.jsonl`.
fn finalize(ctx: &Context, stage: PipelineStage, docs: Vec<Document>, out_dir: &Path) -> Result<Manifest, PipelineError> {
    let vs = verdict_stage(stage).expect("document stage");
    let verdicts: Vec<StageVerdict> = docs
        .iter()
        .map(|d| d.verdict(vs).cloned().unwrap_or_else(|| StageVerdict::keep(vs, TIMESTAMP)))
        .collect();
    let (kept, dropped): (Vec<Document>, Vec<Document>) =
        docs.into_iter().partition(|d| d.verdict(vs).is_none_or(|v| v.kept));
    shards::write_shards(out_dir, &kept, ctx.cfg.shard_size)?;
    shards::write_sorted(&out_dir.join(REJECTED_FILE), &dropped)?;
    let mut m = write_manifest(vs, verdicts.len() as u64, &verdicts).map_err(|e| stage_err(stage, e))?;
    m.stage = stage.name().to_string();
    Ok(m)
}

fn keep(mut d: Document, stage: Stage) -> Document {
    d.record(StageVerdict::keep(stage, TIMESTAMP));
    d
}

fn drop_doc(mut d: Document, stage: Stage, reason: &str) -> Document {
    d.record(StageVerdict::drop_one(stage, reason, TIMESTAMP));
    d
}

/// Stand-in record for an input unit that yielded no document.
fn dropped_unit(id: &str, source: Source, reason: &str) -> Document {
    drop_doc(Document::new(id, source, ""), Stage::Prepare, reason)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e == ext)
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct PrepareReport {
    pdf_pages_in: usize,
    pdf_pages_kept: usize,
    blocks_suppressed: usize,
    pages_dropped_by_flag: BTreeMap<String, u64>,
    srt_malformed_cues: BTreeMap<String, u64>,
}

fn prepare(ctx: &Context, out_dir: &Path) -> Result<Vec<Document>, PipelineError> {
    let st = PipelineStage::Prepare;
    let input = &ctx.spec.input_dir;
    let mut docs = Vec::new();
    let mut report = PrepareReport::default();
    let sub = |name: &str| {
        let p = input.join(name);
        p.is_dir().then_some(p)
    };
    match ctx.spec.prepare_sources {
        PrepareSources::All => {
            docs.extend(prepare_jsonl(input)?);
            if let Some(d) = sub("web") {
                docs.extend(prepare_jsonl(&d)?);
            }
            if let Some(d) = sub("ocr") {
                docs.extend(prepare_ocr(ctx, &d, &mut report)?);
            }
            if let Some(d) = sub("srt") {
                docs.extend(prepare_srt(&d, &mut report)?);
            }
            if let Some(d) = sub("asr") {
                docs.extend(prepare_asr(&d)?);
            }
        }
        PrepareSources::OcrOnly => docs.extend(prepare_ocr(ctx, input, &mut report)?),
        PrepareSources::SrtOnly => docs.extend(prepare_srt(input, &mut report)?),
    }
    let mut seen = BTreeSet::new();
    for d in &docs {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(stage_err(st, format!("duplicate doc_id `{}`", d.doc_id)));
        }
    }
    let path = out_dir.join("report.json");
    write_atomic(&path, &to_pretty_json(&report)).map_err(|e| stage_err(st, e))?;
    Ok(docs)
}

fn prepare_jsonl(dir: &Path) -> Result<Vec<Document>, PipelineError> {
    let st = PipelineStage::Prepare;
    let files = shards::list_files(dir, |p| has_ext(p, "jsonl")).map_err(|e| stage_err(st, e))?;
    let mut out = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| stage_err(st, format!("{}: {e}", f.display())))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match parse_line(line) {
                Ok(d) => out.push(keep(d, Stage::Prepare)),
                Err(e) => {
                    log::warn!(target: "prepare", "{}:{}: {e}", f.display(), i + 1);
                    out.push(dropped_unit(&format!("{}:{}", stem(&f), i + 1), Source::Web, "invalid_record"));
                }
            }
        }
    }
    Ok(out)
}

fn read_pdf_meta(path: &Path) -> Result<BTreeMap<String, PdfMeta>, PipelineError> {
    let st = PipelineStage::Prepare;
    let mut out = BTreeMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let text = std::fs::read_to_string(path).map_err(|e| stage_err(st, e))?;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let m: PdfMeta =
            serde_json::from_str(line).map_err(|e| stage_err(st, format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.insert(m.pdf_id.clone(), m);
    }
    Ok(out)
}

fn prepare_ocr(ctx: &Context, dir: &Path, report: &mut PrepareReport) -> Result<Vec<Document>, PipelineError> {
    let st = PipelineStage::Prepare;
    let meta = read_pdf_meta(&dir.join("pdf_meta.jsonl"))?;
    let files = shards::list_files(dir, |p| has_ext(p, "json")).map_err(|e| stage_err(st, e))?;
    let results: Vec<(Vec<Document>, Option<crate::ocr::PdfReport>)> = files
        .par_iter()
        .map(|f| {
            let pdf_id = stem(f);
            if let Some(m) = meta.get(&pdf_id) {
                if let TriageVerdict::Reject(reason) = triage_pdf(m, &ctx.cfg.triage) {
                    return (vec![dropped_unit(&pdf_id, Source::Pdf, &format!("pdf_{reason}"))], None);
                }
            }
            let pages = std::fs::read_to_string(f)
                .map_err(|e| e.to_string())
                .and_then(|s| parse_pages(&s).map_err(|e| e.to_string()));
            match pages {
                Err(e) => {
                    log::warn!(target: "prepare", "{}: {e}", f.display());
                    (vec![dropped_unit(&pdf_id, Source::Pdf, "invalid_ocr")], None)
                }
                Ok(pages) => {
                    let (docs, rep) = process_pages(&pages, &ctx.cfg.ocr, &pdf_id);
                    let docs = if docs.is_empty() {
                        vec![dropped_unit(&pdf_id, Source::Pdf, "pdf_no_text")]
                    } else {
                        docs.into_iter().map(|d| keep(d, Stage::Prepare)).collect()
                    };
                    (docs, Some(rep))
                }
            }
        })
        .collect();
    let mut out = Vec::new();
    for (docs, rep) in results {
        if let Some(r) = rep {
            report.pdf_pages_in += r.pages_in;
            report.pdf_pages_kept += r.pages_kept;
            report.blocks_suppressed += r.blocks_suppressed;
            for (k, v) in r.dropped_by_flag {
                *report.pages_dropped_by_flag.entry(k).or_insert(0) += v;
            }
        }
        out.extend(docs);
    }
    Ok(out)
}

fn prepare_srt(dir: &Path, report: &mut PrepareReport) -> Result<Vec<Document>, PipelineError> {
    let st = PipelineStage::Prepare;
    let files = shards::list_files(dir, |p| has_ext(p, "srt")).map_err(|e| stage_err(st, e))?;
    let mut out = Vec::new();
    for f in files {
        let bytes = std::fs::read(&f).map_err(|e| stage_err(st, e))?;
        let id = format!("srt:{}", stem(&f));
        let (doc, parsed) = srt_document(&id, &bytes);
        for m in &parsed.malformed {
            *report.srt_malformed_cues.entry(m.reason.to_string()).or_insert(0) += 1;
        }
        out.push(match doc {
            Some(d) => keep(d, Stage::Prepare),
            None => dropped_unit(&id, Source::Speech, "srt_empty"),
        });
    }
    Ok(out)
}

fn prepare_asr(dir: &Path) -> Result<Vec<Document>, PipelineError> {
    let st = PipelineStage::Prepare;
    let files = shards::list_files(dir, |p| has_ext(p, "jsonl")).map_err(|e| stage_err(st, e))?;
    let mut by_media: BTreeMap<String, Vec<TranscriptChunk>> = BTreeMap::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| stage_err(st, e))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let c: TranscriptChunk =
                serde_json::from_str(line).map_err(|e| stage_err(st, format!("{}:{}: {e}", f.display(), i + 1)))?;
            by_media.entry(c.media_id.clone()).or_default().push(c);
        }
    }
    let mut out = Vec::new();
    for (media, chunks) in by_media {
        let id = format!("asr:{media}");
        out.push(match merge_chunks(&chunks, &IdentityPunctuator) {
            Ok(mut d) => {
                d.doc_id = id;
                keep(d, Stage::Prepare)
            }
            Err(e) => {
                log::warn!(target: "prepare", "{id}: {e}");
                dropped_unit(&id, Source::Speech, "asr_invalid")
            }
        });
    }
    Ok(out)
}

fn clean(ctx: &Context, docs: Vec<Document>) -> Result<Vec<Document>, PipelineError> {
    let global = CleanConfig::new(&ctx.cfg.clean, ctx.cfg.thresholds.max_symbol_ratio, None);
    let mut per_lang = BTreeMap::new();
    for (code, lc) in ctx.langs_of(&docs)? {
        if code != UNDETERMINED {
            let c = CleanConfig::new(&ctx.cfg.clean, lc.thresholds.max_symbol_ratio, lc.terminal_punct.as_deref());
            per_lang.insert(code, c);
        }
    }
    Ok(docs
        .into_par_iter()
        .map(|mut d| {
            let cfg = per_lang.get(&d.language).unwrap_or(&global);
            let outcome = clean_document(&d.text, d.source, cfg, TIMESTAMP);
            if outcome.verdict.kept {
                d.text = outcome.text;
            }
            d.record(outcome.verdict);
            d
        })
        .collect())
}

fn load_lid(ctx: &Context) -> Result<LanguageIdentifier, PipelineError> {
    let s = &ctx.cfg.lid;
    let cfg_err = |e: crate::lid::LidError| PipelineError::Config(format!("lid: {e}"));
    let model = match (&s.model, &s.training_data) {
        (Some(p), _) => Some(CharNgramModel::load(&ctx.cfg.resolve(p)).map_err(cfg_err)?),
        (None, Some(p)) => Some(train_from_file(&ctx.cfg.resolve(p), s.order, s.smoothing).map_err(cfg_err)?),
        (None, None) => None,
    };
    LanguageIdentifier::from_settings(s, model.map(Arc::new)).map_err(cfg_err)
}

fn lid(ctx: &Context, docs: Vec<Document>) -> Result<Vec<Document>, PipelineError> {
    let identifier = load_lid(ctx)?;
    let selected: BTreeSet<&str> = ctx.spec.languages.iter().map(String::as_str).collect();
    let out: Vec<Result<Document, PipelineError>> = docs
        .into_par_iter()
        .map(|mut d| {
            let outcome = match identifier.identify(&d.text) {
                Ok(o) => o,
                Err(crate::lid::LidError::EmptyText) => {
                    d.language = UNDETERMINED.into();
                    return Ok(drop_doc(d, Stage::Lid, "undetermined_language"));
                }
                Err(e) => return Err(stage_err(PipelineStage::Lid, format!("{}: {e}", d.doc_id))),
            };
            d.language = outcome.language;
            d.metadata.insert("lid_reason".into(), outcome.reason.to_string());
            Ok(if d.language == UNDETERMINED {
                drop_doc(d, Stage::Lid, "undetermined_language")
            } else if !selected.is_empty() && !selected.contains(d.language.as_str()) {
                drop_doc(d, Stage::Lid, "language_not_selected")
            } else {
                keep(d, Stage::Lid)
            })
        })
        .collect();
    out.into_iter().collect()
}

fn lexicons(langs: &BTreeMap<String, LangConfig>) -> Result<BTreeMap<String, NsfwLexicon>, PipelineError> {
    langs
        .iter()
        .map(|(code, lc)| {
            let lex = match &lc.nsfw_lexicon_path {
                Some(p) => NsfwLexicon::load(code, p).map_err(|e| PipelineError::Config(e.to_string()))?,
                None => NsfwLexicon::empty(code),
            };
            Ok((code.clone(), lex))
        })
        .collect()
}

fn analyze(ctx: &Context, docs: Vec<Document>) -> Result<Vec<Document>, PipelineError> {
    let langs = ctx.langs_of(&docs)?;
    let lex = lexicons(&langs)?;
    Ok(docs
        .into_par_iter()
        .map(|mut d| {
            let lc = &langs[&d.language];
            match compute_stats(&d.text, &lex[&d.language], &lc.allowed_scripts) {
                Ok(stats) => {
                    d.stats = Some(stats);
                    keep(d, Stage::Analyze)
                }
                Err(_) => drop_doc(d, Stage::Analyze, "empty_text"),
            }
        })
        .collect())
}

fn flag(ctx: &Context, docs: Vec<Document>) -> Result<Vec<Document>, PipelineError> {
    let langs = ctx.langs_of(&docs)?;
    let needs_stats = docs.iter().any(|d| d.stats.is_none());
    let lex = if needs_stats { lexicons(&langs)? } else { BTreeMap::new() };
    Ok(docs
        .into_par_iter()
        .map(|mut d| {
            let lc = &langs[&d.language];
            if d.stats.is_none() {
                match compute_stats(&d.text, &lex[&d.language], &lc.allowed_scripts) {
                    Ok(s) => d.stats = Some(s),
                    Err(_) => return drop_doc(d, Stage::Flag, "empty_text"),
                }
            }
            let v = apply_filters(d.stats.as_ref().expect("stats set above"), &lc.thresholds, TIMESTAMP);
            d.record(v);
            d
        })
        .collect())
}

fn by_language(docs: &[Document]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        groups.entry(d.language.as_str()).or_default().push(i);
    }
    for idx in groups.values_mut() {
        idx.sort_by(|&a, &b| docs[a].doc_id.cmp(&docs[b].doc_id));
    }
    groups
}

fn dedup_stage(ctx: &Context, docs: Vec<Document>, out_dir: &Path) -> Result<Vec<Document>, PipelineError> {
    let st = PipelineStage::Dedup;
    let cfg = &ctx.cfg.dedup;
    let pin: BTreeSet<&str> = cfg.pin_sources.iter().map(String::as_str).collect();
    let mut dropped = BTreeSet::new();
    let mut clusters = Vec::new();
    for (lang, idx) in by_language(&docs) {
        let group: Vec<DedupDoc> = idx
            .iter()
            .map(|&i| DedupDoc {
                doc_id: &docs[i].doc_id,
                text: &docs[i].text,
                pinned: pin.contains(docs[i].source.as_str()),
            })
            .collect();
        let res = dedup(&group, cfg).map_err(|e| stage_err(st, e))?;
        log::info!(target: "dedup", "{lang}: {} clusters, {} dropped, {} too short", res.clusters.len(), res.dropped.len(), res.exempt);
        dropped.extend(res.dropped);
        clusters.extend(res.clusters);
    }
    clusters.sort_by(|a, b| a.representative.cmp(&b.representative));
    let mut audit = Vec::new();
    write_audit(&mut audit, &clusters).map_err(|e| stage_err(st, e))?;
    write_atomic(&out_dir.join("clusters.jsonl"), &audit).map_err(|e| stage_err(st, e))?;
    Ok(docs
        .into_iter()
        .map(|d| {
            if dropped.contains(&d.doc_id) {
                drop_doc(d, Stage::Dedup, "fuzzy_duplicate")
            } else {
                keep(d, Stage::Dedup)
            }
        })
        .collect())
}

/// Training and validation samples for one language, as positions in its
/// doc_id-sorted list. Validation takes the head of a seeded shuffle and
/// training the rest up to its budget; when nothing is left for training
/// the validation sample is reused.
pub fn lm_split(n: usize, cfg: &LmConfig, seed: u64, language: &str) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ xxh3_64(language.as_bytes()));
    order.shuffle(&mut rng);
    let n_val = cfg.validation_docs.min(n);
    let validation = order[..n_val].to_vec();
    let rest = &order[n_val..];
    let train = if rest.is_empty() { validation.clone() } else { rest[..cfg.train_docs.min(rest.len())].to_vec() };
    (train, validation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelEntry {
    Trained { file: String, train_docs: usize, validation_docs: usize, vocab_size: usize },
    Skipped { skipped: String },
}

fn lm_train(ctx: &Context, docs: &[Document], out_dir: &Path) -> Result<Manifest, PipelineError> {
    let st = PipelineStage::LmTrain;
    let lm = &ctx.cfg.lm;
    for old in shards::list_files(out_dir, |p| has_ext(p, "lm")).map_err(|e| stage_err(st, e))? {
        std::fs::remove_file(&old).map_err(|e| stage_err(st, e))?;
    }
    let mut entries = BTreeMap::new();
    for (lang, idx) in by_language(docs) {
        if idx.len() < lm.min_train_docs {
            let why = format!("{} documents, fewer than {}", idx.len(), lm.min_train_docs);
            log::info!(target: "lm-train", "{lang}: skipped ({why})");
            entries.insert(lang.to_string(), ModelEntry::Skipped { skipped: why });
            continue;
        }
        let (train, validation) = lm_split(idx.len(), lm, ctx.cfg.seed, lang);
        let texts: Vec<&str> = train.iter().map(|&k| docs[idx[k]].text.as_str()).collect();
        match LanguageModel::train(&texts, lm) {
            Ok(model) => {
                let file = format!("{lang}.lm");
                save_model(&model, &out_dir.join(&file)).map_err(|e| stage_err(st, e))?;
                log::info!(target: "lm-train", "{lang}: trained on {} documents", texts.len());
                entries.insert(
                    lang.to_string(),
                    ModelEntry::Trained {
                        file,
                        train_docs: train.len(),
                        validation_docs: validation.len(),
                        vocab_size: model.tokenizer.vocab_size(),
                    },
                );
            }
            Err(e) => {
                log::warn!(target: "lm-train", "{lang}: {e}");
                entries.insert(lang.to_string(), ModelEntry::Skipped { skipped: e.to_string() });
            }
        }
    }
    write_atomic(&out_dir.join(MODELS_FILE), &to_pretty_json(&entries)).map_err(|e| stage_err(st, e))?;
    Ok(Manifest::passthrough(st.name(), docs.len() as u64))
}

fn read_models(ctx: &Context) -> Result<BTreeMap<String, ModelEntry>, PipelineError> {
    let path = ctx.spec.stage_dir(PipelineStage::LmTrain).join(MODELS_FILE);
    match std::fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display()))),
        Err(_) => Ok(BTreeMap::new()),
    }
}

fn load_models(ctx: &Context) -> Result<BTreeMap<String, LanguageModel>, PipelineError> {
    let dir = ctx.spec.stage_dir(PipelineStage::LmTrain);
    let mut out = BTreeMap::new();
    for (lang, entry) in read_models(ctx)? {
        if let ModelEntry::Trained { file, .. } = entry {
            let m = load_model_file(&dir.join(&file)).map_err(|e| PipelineError::Io(e.to_string()))?;
            out.insert(lang, m);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub threshold: f64,
    pub percentile: f64,
    pub validation_docs: usize,
}

fn calibrate(ctx: &Context, docs: &[Document], out_dir: &Path) -> Result<Manifest, PipelineError> {
    let st = PipelineStage::Calibrate;
    let models = load_models(ctx)?;
    if models.is_empty() && !ctx.spec.stage_dir(PipelineStage::LmTrain).join(MODELS_FILE).exists() {
        return Err(stage_err(st, "no trained models; run lm-train first"));
    }
    let lm = &ctx.cfg.lm;
    let groups = by_language(docs);
    let mut out = BTreeMap::new();
    for (lang, model) in &models {
        let Some(idx) = groups.get(lang.as_str()) else { continue };
        let (_, validation) = lm_split(idx.len(), lm, ctx.cfg.seed, lang);
        let ppls: Vec<f64> = validation
            .par_iter()
            .filter_map(|&k| model.perplexity(&docs[idx[k]].text).ok().map(|(pp, _)| pp))
            .collect();
        match calibrate_threshold(&ppls, lm.percentile) {
            Ok(threshold) => {
                log::info!(target: "calibrate", "{lang}: threshold {threshold:.3} from {} documents", ppls.len());
                out.insert(
                    lang.clone(),
                    ThresholdEntry { threshold, percentile: lm.percentile, validation_docs: ppls.len() },
                );
            }
            Err(e) => log::warn!(target: "calibrate", "{lang}: {e}"),
        }
    }
    write_atomic(&out_dir.join(THRESHOLDS_FILE), &to_pretty_json(&out)).map_err(|e| stage_err(st, e))?;
    Ok(Manifest::passthrough(st.name(), docs.len() as u64))
}

fn read_thresholds(ctx: &Context) -> Result<BTreeMap<String, ThresholdEntry>, PipelineError> {
    let path = ctx.spec.stage_dir(PipelineStage::Calibrate).join(THRESHOLDS_FILE);
    match std::fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display()))),
        Err(_) => Ok(BTreeMap::new()),
    }
}

fn ppl_filter(ctx: &Context, docs: Vec<Document>) -> Result<Vec<Document>, PipelineError> {
    let models = load_models(ctx)?;
    let calibrated = if ctx.cfg.lm.use_calibrated { read_thresholds(ctx)? } else { BTreeMap::new() };
    let langs = ctx.langs_of(&docs)?;
    let threshold = |lang: &str| -> Option<f64> {
        ctx.spec
            .ppl_threshold
            .or_else(|| calibrated.get(lang).map(|t| t.threshold))
            .or_else(|| langs.get(lang).and_then(|l| l.ppl_threshold))
    };
    Ok(docs
        .into_par_iter()
        .map(|mut d| {
            let Some(model) = models.get(&d.language) else {
                return keep(d, Stage::Ppl);
            };
            match model.perplexity(&d.text) {
                Ok((pp, _)) => {
                    d.metadata.insert("perplexity".into(), format!("{pp:.4}"));
                    match threshold(&d.language) {
                        Some(t) if !ppl_keep(pp, t) => drop_doc(d, Stage::Ppl, "perplexity"),
                        _ => keep(d, Stage::Ppl),
                    }
                }
                Err(_) => drop_doc(d, Stage::Ppl, "ppl_empty"),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_shapes() {
        let cfg = LmConfig { train_docs: 5, validation_docs: 3, ..LmConfig::default() };
        let (train, val) = lm_split(20, &cfg, 7, "hin");
        assert_eq!((train.len(), val.len()), (5, 3));
        assert!(train.iter().all(|t| !val.contains(t)));
        assert_eq!(lm_split(20, &cfg, 7, "hin"), (train, val));
        let (train, val) = lm_split(2, &cfg, 7, "hin");
        assert_eq!(train, val);
        assert_ne!(lm_split(20, &cfg, 7, "tam").1, lm_split(20, &cfg, 7, "hin").1);
    }
}
