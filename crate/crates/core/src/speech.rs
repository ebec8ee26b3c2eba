//! Subtitle and ASR transcript preparation.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Document, Source};
use crate::provider::{string_field, JsonlProcess, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrtCue {
    pub index: u32,
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
}

/// A cue block that could not be parsed, reported by its first line (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedCue {
    pub line_no: usize,
    pub reason: &'static str,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct SrtParse {
    pub cues: Vec<SrtCue>,
    pub malformed: Vec<MalformedCue>,
}

static TIMING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(\d{1,3}):(\d{2}):(\d{2})[,.](\d{3})\s*-->\s*(\d{1,3}):(\d{2}):(\d{2})[,.](\d{3})(?:\s.*)?$")
        .unwrap()
});

fn millis(caps: &regex::Captures<'_>, at: usize) -> Option<u64> {
    let part = |k: usize| caps.get(at + k)?.as_str().parse::<u64>().ok();
    let (h, m, s, ms) = (part(0)?, part(1)?, part(2)?, part(3)?);
    if m >= 60 || s >= 60 {
        return None;
    }
    Some(((h * 60 + m) * 60 + s) * 1000 + ms)
}

/// Parses SRT bytes. A UTF-8 BOM and CRLF line endings are tolerated.
/// Cues with a bad index or timing line are skipped and reported.
pub fn parse_srt(bytes: &[u8]) -> SrtParse {
    let text = String::from_utf8_lossy(bytes);
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();

    let mut out = SrtParse::default();
    let mut last_index = 0u32;
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i;
        while end < lines.len() && !lines[end].trim().is_empty() {
            end += 1;
        }
        let block = &lines[start..end];
        i = end;

        let Ok(index) = block[0].trim().parse::<u32>() else {
            out.malformed.push(MalformedCue { line_no: start + 1, reason: "bad_index" });
            continue;
        };
        let timing = block.get(1).and_then(|l| TIMING.captures(l));
        let times = timing.as_ref().and_then(|c| Some((millis(c, 1)?, millis(c, 5)?)));
        let Some((start_ms, end_ms)) = times else {
            out.malformed.push(MalformedCue { line_no: start + 1, reason: "bad_timing" });
            continue;
        };
        if end_ms < start_ms {
            out.malformed.push(MalformedCue { line_no: start + 1, reason: "negative_duration" });
            continue;
        }
        if index == 0 || index <= last_index {
            out.malformed.push(MalformedCue { line_no: start + 1, reason: "index_order" });
            continue;
        }
        last_index = index;
        out.cues.push(SrtCue { index, start_ms, end_ms, text: block[2..].join("\n") });
    }
    out
}

fn fmt_time(ms: u64) -> String {
    let (h, rest) = (ms / 3_600_000, ms % 3_600_000);
    format!("{:02}:{:02}:{:02},{:03}", h, rest / 60_000, (rest % 60_000) / 1000, rest % 1000)
}

/// Writes cues back in canonical SRT form.
pub fn to_srt(cues: &[SrtCue]) -> String {
    let mut out = String::new();
    for c in cues {
        out.push_str(&format!("{}\n{} --> {}\n{}\n\n", c.index, fmt_time(c.start_ms), fmt_time(c.end_ms), c.text));
    }
    out
}

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"</?[A-Za-z][^<>]*>|\{\\[^{}]*\}").unwrap());
static SOUND_CUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\[[^\]]*\]|\([^)]*\))\s*$").unwrap());
static SPEAKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\p{Lu}[\p{Lu}\p{Nd}'\-]{0,19}:\s*").unwrap());
static LEAD_ELLIPSIS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(?:\.\.\.|…)+\s*").unwrap());
static TRAIL_ELLIPSIS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*(?:\.\.\.|…)+\s*$").unwrap());

fn clean_line(line: &str) -> String {
    let line = TAG.replace_all(line, "");
    if SOUND_CUE.is_match(&line) {
        return String::new();
    }
    let line = SPEAKER.replace(&line, "");
    let line = LEAD_ELLIPSIS.replace(&line, "");
    let line = TRAIL_ELLIPSIS.replace(&line, "");
    line.trim().to_string()
}

/// Strips tags, whole-line sound cues, speaker labels and continuation
/// ellipses, then joins what remains with single spaces.
pub fn clean_cue_texts<S: AsRef<str>>(texts: &[S]) -> String {
    texts
        .iter()
        .flat_map(|t| t.as_ref().split('\n').map(clean_line).collect::<Vec<_>>())
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn clean_cues(cues: &[SrtCue]) -> String {
    let texts: Vec<&str> = cues.iter().map(|c| c.text.as_str()).collect();
    clean_cue_texts(&texts)
}

/// One SRT file becomes one document.
pub fn srt_document(doc_id: &str, bytes: &[u8]) -> (Option<Document>, SrtParse) {
    let parsed = parse_srt(bytes);
    let text = clean_cues(&parsed.cues);
    if text.is_empty() {
        return (None, parsed);
    }
    let mut doc = Document::new(doc_id, Source::Speech, text);
    doc.metadata.insert("format".into(), "srt".into());
    doc.metadata.insert("cues".into(), parsed.cues.len().to_string());
    (Some(doc), parsed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptChunk {
    pub media_id: String,
    pub order: u32,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum SpeechError {
    #[error("media has no transcript chunks")]
    EmptyMedia,
    #[error("chunks of `{0}` disagree on media_id")]
    MixedMedia(String),
    #[error("media `{media_id}` has two chunks with order {order}")]
    DuplicateOrder { media_id: String, order: u32 },
    #[error("punctuator failed on media `{media_id}`: {source}")]
    ProviderFailure { media_id: String, source: ProviderError },
}

/// Restores punctuation in an unpunctuated transcript.
pub trait Punctuator: Send + Sync {
    fn id(&self) -> &str;
    fn punctuate(&self, text: &str) -> Result<String, ProviderError>;
    /// Whether calls must not overlap.
    fn single_flight(&self) -> bool {
        false
    }
}

pub struct IdentityPunctuator;

impl Punctuator for IdentityPunctuator {
    fn id(&self) -> &str {
        "identity"
    }

    fn punctuate(&self, text: &str) -> Result<String, ProviderError> {
        Ok(text.to_string())
    }
}

/// Punctuator backed by a subprocess: `{"text"}` in, `{"text"}` out.
pub struct SubprocessPunctuator(pub JsonlProcess);

impl Punctuator for SubprocessPunctuator {
    fn id(&self) -> &str {
        self.0.command()
    }

    fn punctuate(&self, text: &str) -> Result<String, ProviderError> {
        let resp = self.0.call(&serde_json::json!({ "text": text }))?;
        string_field(&resp, "text")
    }

    fn single_flight(&self) -> bool {
        true
    }
}

/// Joins one media item's chunks in `order` and punctuates the result.
pub fn merge_chunks(chunks: &[TranscriptChunk], punctuator: &dyn Punctuator) -> Result<Document, SpeechError> {
    let first = chunks.first().ok_or(SpeechError::EmptyMedia)?;
    let media_id = first.media_id.clone();
    if chunks.iter().any(|c| c.media_id != media_id) {
        return Err(SpeechError::MixedMedia(media_id));
    }
    let mut sorted: Vec<&TranscriptChunk> = chunks.iter().collect();
    sorted.sort_by_key(|c| c.order);
    if let Some(w) = sorted.windows(2).find(|w| w[0].order == w[1].order) {
        return Err(SpeechError::DuplicateOrder { media_id, order: w[0].order });
    }
    let joined = sorted.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(" ");
    let text = punctuator
        .punctuate(&joined)
        .map_err(|source| SpeechError::ProviderFailure { media_id: media_id.clone(), source })?;
    let mut doc = Document::new(media_id, Source::Speech, text);
    doc.metadata.insert("format".into(), "asr".into());
    doc.metadata.insert("chunks".into(), chunks.len().to_string());
    doc.metadata.insert("punctuator".into(), punctuator.id().to_string());
    Ok(doc)
}
