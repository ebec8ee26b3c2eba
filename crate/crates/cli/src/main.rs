//! `setu`: command-line front end. Stage subcommands run one pipeline
//! stage over a directory; `run` chains several. Exit status is 0 on
//! success, 1 on configuration errors and 2 on failures while running.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use setu::config::Config;
use setu::lm::{calibrate_threshold, load_model_file};
use setu::model::Document;
use setu::pipeline::shards::{document_files, read_files};
use setu::pipeline::{self, write_atomic, PipelineSpec, PipelineStage, PrepareSources};
use setu::provider::JsonlProcess;
use setu::translate::{self, Skeleton, SubprocessTranslator, TranslatorProvider};
use setu::xlit::{self, Romanizer, SubprocessRomanizer, XlitDict};

#[derive(Parser, Debug)]
#[command(name = "setu", version, about = "Corpus curation pipeline")]
struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Keep only these languages after identification (repeatable).
    #[arg(long = "lang", global = true, value_name = "CODE")]
    langs: Vec<String>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Seed for sampling; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log debug messages.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Io {
    #[arg(long, value_name = "DIR")]
    input: PathBuf,
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run several stages in order (all of them by default).
    Run {
        #[command(flatten)]
        io: Io,
        /// Comma-separated stage names.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<String>,
        #[arg(long)]
        percentile: Option<f64>,
    },
    /// Prepare documents from OCR JSON files (plus optional pdf_meta.jsonl).
    PrepareOcr(Io),
    /// Prepare documents from SRT subtitle files.
    PrepareSrt(Io),
    /// Remove code spans, menu lines and repeated or symbol-only chunks.
    Clean(Io),
    /// Identify document languages.
    Lid(Io),
    /// Attach quality statistics.
    Analyze(Io),
    /// Drop documents failing the per-language thresholds.
    Flag(Io),
    /// Drop near-duplicate documents.
    Dedup {
        #[command(flatten)]
        io: Io,
        /// Jaccard similarity threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train one perplexity model per language into OUTPUT/lm-train.
    LmTrain(Io),
    /// Score documents with a model, writing {doc_id, perplexity, token_count} lines.
    LmScore {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output JSONL file; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compute a perplexity threshold from scored records.
    Calibrate {
        /// JSONL file or directory of files with a `perplexity` field.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 80.0)]
        percentile: f64,
        /// Output JSON file; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Drop documents above the perplexity threshold, using models in OUTPUT/lm-train.
    PplFilter {
        #[command(flatten)]
        io: Io,
        /// Fixed threshold for every language.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Split documents into skeletons and a sentence table.
    TranslateTemplate(Io),
    /// Fill skeletons with translations.
    TranslateReplace {
        #[command(flatten)]
        io: Io,
        /// JSONL of {sentence_id, translation}.
        #[arg(long, conflicts_with = "translator")]
        translations: Option<PathBuf>,
        /// Translator command speaking the JSONL provider protocol.
        #[arg(long)]
        translator: Option<String>,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
    },
    /// Romanize documents with a word dictionary.
    Transliterate {
        #[command(flatten)]
        io: Io,
        /// Source<TAB>roman dictionary.
        #[arg(long)]
        dict: PathBuf,
        /// Romanizer command used to fill unmapped words.
        #[arg(long)]
        romanizer: Option<String>,
        #[arg(long, default_value_t = xlit::DEFAULT_MAX_ROUNDS)]
        max_rounds: usize,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Failure(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Failure(_) => 2,
        }
    }
}

impl From<pipeline::PipelineError> for CliError {
    fn from(e: pipeline::PipelineError) -> Self {
        match e.exit_code() {
            1 => CliError::Config(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

fn fail(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    pipeline::init_logging(if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Info });
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = match &e {
                CliError::Config(m) | CliError::Failure(m) => m,
            };
            log::error!("{msg}");
            ExitCode::from(e.code())
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    match &cli.config {
        Some(p) => Config::load(p).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(Config::default()),
    }
}

fn spec(cli: &Cli, stages: Vec<PipelineStage>, io: &Io) -> PipelineSpec {
    let mut s = PipelineSpec::new(stages, &io.input, &io.output);
    s.languages = cli.langs.clone();
    s.workers = cli.workers;
    s.seed = cli.seed;
    s
}

fn run_stages(cfg: &Config, spec: PipelineSpec) -> Result<(), CliError> {
    let report = pipeline::run(&spec, cfg)?;
    println!("{}", serde_json::to_string_pretty(&report.summary).expect("summary serializes"));
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = load_config(cli)?;
    let single = |stage: PipelineStage, io: &Io| spec(cli, vec![stage], io);
    match &cli.command {
        Command::Run { io, stages, percentile } => {
            let stages = if stages.is_empty() {
                PipelineStage::ALL.to_vec()
            } else {
                stages
                    .iter()
                    .map(|s| PipelineStage::parse(s).ok_or_else(|| CliError::Config(format!("unknown stage `{s}`"))))
                    .collect::<Result<Vec<_>, _>>()?
            };
            if let Some(p) = percentile {
                cfg.lm.percentile = *p;
            }
            run_stages(&cfg, spec(cli, stages, io))
        }
        Command::PrepareOcr(io) => {
            let mut s = single(PipelineStage::Prepare, io);
            s.prepare_sources = PrepareSources::OcrOnly;
            run_stages(&cfg, s)
        }
        Command::PrepareSrt(io) => {
            let mut s = single(PipelineStage::Prepare, io);
            s.prepare_sources = PrepareSources::SrtOnly;
            run_stages(&cfg, s)
        }
        Command::Clean(io) => run_stages(&cfg, single(PipelineStage::Clean, io)),
        Command::Lid(io) => run_stages(&cfg, single(PipelineStage::Lid, io)),
        Command::Analyze(io) => run_stages(&cfg, single(PipelineStage::Analyze, io)),
        Command::Flag(io) => run_stages(&cfg, single(PipelineStage::Flag, io)),
        Command::Dedup { io, threshold } => {
            if let Some(t) = threshold {
                cfg.dedup.threshold = *t;
            }
            run_stages(&cfg, single(PipelineStage::Dedup, io))
        }
        Command::LmTrain(io) => run_stages(&cfg, single(PipelineStage::LmTrain, io)),
        Command::PplFilter { io, threshold } => {
            let mut s = single(PipelineStage::PplFilter, io);
            s.ppl_threshold = *threshold;
            run_stages(&cfg, s)
        }
        Command::LmScore { model, input, output } => lm_score(model, input, output.as_deref()),
        Command::Calibrate { input, percentile, output } => calibrate(input, *percentile, output.as_deref()),
        Command::TranslateTemplate(io) => translate_template(io),
        Command::TranslateReplace { io, translations, translator, batch_size } => {
            translate_replace(io, translations.as_deref(), translator.as_deref(), *batch_size)
        }
        Command::Transliterate { io, dict, romanizer, max_rounds } => {
            transliterate(io, dict, romanizer.as_deref(), *max_rounds)
        }
    }
}

fn read_docs(dir: &Path) -> Result<Vec<Document>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("input directory {} does not exist", dir.display())));
    }
    let files = document_files(dir).map_err(fail)?;
    read_files(&files).map_err(fail)
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match output {
        Some(p) => write_atomic(p, bytes).map_err(|e| fail(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(bytes).map_err(fail),
    }
}

fn jsonl<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        out.extend(serde_json::to_vec(&r).expect("serializable"));
        out.push(b'\n');
    }
    out
}

fn lm_score(model: &Path, input: &Path, output: Option<&Path>) -> Result<(), CliError> {
    let lm = load_model_file(model).map_err(|e| CliError::Config(e.to_string()))?;
    let mut docs = read_docs(input)?;
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let mut records = Vec::new();
    for d in &docs {
        match lm.score(&d.doc_id, &d.text) {
            Ok(r) => records.push(r),
            Err(e) => log::warn!("{}: {e}", d.doc_id),
        }
    }
    emit(output, &jsonl(records))
}

fn read_perplexities(input: &Path) -> Result<Vec<f64>, CliError> {
    let files = if input.is_dir() {
        setu::pipeline::shards::list_files(input, |p| p.extension().is_some_and(|e| e == "jsonl")).map_err(fail)?
    } else if input.is_file() {
        vec![input.to_path_buf()]
    } else {
        return Err(CliError::Config(format!("{} does not exist", input.display())));
    };
    let mut out = Vec::new();
    for f in files {
        let reader = BufReader::new(std::fs::File::open(&f).map_err(fail)?);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(fail)?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| fail(format!("{}:{}: {e}", f.display(), i + 1)))?;
            let pp = v
                .get("perplexity")
                .and_then(|p| p.as_f64().or_else(|| p.as_str().and_then(|s| s.parse().ok())))
                .or_else(|| v.pointer("/metadata/perplexity").and_then(|p| p.as_str()?.parse().ok()))
                .ok_or_else(|| fail(format!("{}:{}: no perplexity", f.display(), i + 1)))?;
            out.push(pp);
        }
    }
    Ok(out)
}

fn calibrate(input: &Path, percentile: f64, output: Option<&Path>) -> Result<(), CliError> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(CliError::Config("percentile must be in (0, 100)".into()));
    }
    let ppls = read_perplexities(input)?;
    let threshold = calibrate_threshold(&ppls, percentile).map_err(fail)?;
    let body = serde_json::json!({ "threshold": threshold, "percentile": percentile, "count": ppls.len() });
    let mut bytes = serde_json::to_vec_pretty(&body).expect("json");
    bytes.push(b'\n');
    emit(output, &bytes)
}

fn translate_template(io: &Io) -> Result<(), CliError> {
    let mut docs = read_docs(&io.input)?;
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let skeletons: Vec<Skeleton> = docs.iter().map(|d| translate::template(&d.doc_id, &d.text)).collect();
    let table = translate::build_table(&skeletons);
    let mut sentences = Vec::new();
    table.export(&mut sentences).map_err(fail)?;
    emit(Some(&io.output.join("skeletons.jsonl")), &jsonl(&skeletons))?;
    emit(Some(&io.output.join("sentences.jsonl")), &sentences)?;
    log::info!("{} documents, {} distinct sentences", skeletons.len(), table.len());
    Ok(())
}

fn read_skeletons(path: &Path) -> Result<Vec<Skeleton>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| fail(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn translate_replace(
    io: &Io,
    translations: Option<&Path>,
    translator: Option<&str>,
    batch_size: usize,
) -> Result<(), CliError> {
    let skeletons = read_skeletons(&io.input.join("skeletons.jsonl"))?;
    let map: HashMap<String, String> = match (translations, translator) {
        (Some(p), _) => {
            let f = std::fs::File::open(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            translate::read_translations(BufReader::new(f)).map_err(fail)?
        }
        (None, Some(cmd)) => {
            let provider = SubprocessTranslator(JsonlProcess::spawn_str(cmd).map_err(|e| CliError::Config(e.to_string()))?);
            translate_all(&skeletons, &provider, batch_size)?
        }
        (None, None) => translate_all(&skeletons, &translate::IdentityTranslator, batch_size)?,
    };
    let mut rows = Vec::new();
    for sk in &skeletons {
        let text = translate::replace(sk, &map).map_err(fail)?;
        rows.push(serde_json::json!({ "doc_id": sk.doc_id, "text": text }));
    }
    emit(Some(&io.output.join("translated.jsonl")), &jsonl(rows))
}

fn translate_all(
    skeletons: &[Skeleton],
    provider: &dyn TranslatorProvider,
    batch_size: usize,
) -> Result<HashMap<String, String>, CliError> {
    translate::translate_table(&translate::build_table(skeletons), provider, batch_size).map_err(fail)
}

fn transliterate(io: &Io, dict_path: &Path, romanizer: Option<&str>, max_rounds: usize) -> Result<(), CliError> {
    let f = std::fs::File::open(dict_path).map_err(|e| CliError::Config(format!("{}: {e}", dict_path.display())))?;
    let mut dict: XlitDict = XlitDict::from_tsv(BufReader::new(f)).map_err(|e| CliError::Config(e.to_string()))?;
    let mut docs = read_docs(&io.input)?;
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    if let Some(cmd) = romanizer {
        let provider = SubprocessRomanizer(JsonlProcess::spawn_str(cmd).map_err(|e| CliError::Config(e.to_string()))?);
        fill_dictionary(&docs, &mut dict, &provider, max_rounds)?;
        xlit::save_tsv(&dict, &io.output.join("dict.tsv")).map_err(fail)?;
    }
    let mut unmapped = xlit::UnmappedLog::new();
    for d in &mut docs {
        let (text, log) = xlit::replace_words(&d.text, &dict);
        d.text = text;
        for (w, n) in log {
            *unmapped.entry(w).or_insert(0) += n;
        }
    }
    emit(Some(&io.output.join("romanized.jsonl")), &jsonl(&docs))?;
    let rows = unmapped.iter().map(|(w, n)| serde_json::json!({ "word": w, "count": n }));
    emit(Some(&io.output.join("unmapped.jsonl")), &jsonl(rows))?;
    log::info!("{} documents, {} unmapped word types", docs.len(), unmapped.len());
    Ok(())
}

/// Fills the dictionary round by round over the whole corpus.
fn fill_dictionary(docs: &[Document], dict: &mut XlitDict, provider: &dyn Romanizer, max_rounds: usize) -> Result<(), CliError> {
    let corpus: String = docs.iter().map(|d| d.text.as_str()).collect::<Vec<_>>().join("\n");
    match xlit::iterate(&corpus, dict, provider, max_rounds) {
        Ok((_, report)) => {
            log::info!("dictionary converged after {} rounds, {} entries added", report.rounds, report.added);
            Ok(())
        }
        Err(xlit::XlitError::NonConvergence { remaining, rounds }) => {
            log::warn!("{} words unmapped after {rounds} rounds", remaining.len());
            Ok(())
        }
        Err(e) => Err(fail(e)),
    }
}
