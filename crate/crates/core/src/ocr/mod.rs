//! OCR layout post-processing and PDF triage.
//!
//! Pages arrive as Block → Paragraph → Word → Character trees (see
//! [`vision`] for the accepted JSON). Each page has overlapping blocks
//! suppressed, is checked against the layout flags, and the surviving
//! pages of a PDF are merged into documents of consecutive page runs.

pub mod geometry;
pub mod vision;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{Document, Source};

pub use geometry::{page_flags, suppress_boxes, suppression_set, BBox, PageFlag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrChar {
    pub bbox: BBox,
    pub confidence: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrWord {
    pub bbox: BBox,
    pub confidence: f64,
    pub symbols: Vec<OcrChar>,
}

impl OcrWord {
    pub fn text(&self) -> String {
        self.symbols.iter().map(|s| s.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrParagraph {
    pub bbox: BBox,
    pub confidence: f64,
    /// (script or language code, confidence) pairs reported by the OCR engine.
    pub script_scores: Vec<(String, f64)>,
    pub words: Vec<OcrWord>,
}

impl OcrParagraph {
    pub fn mean_script_confidence(&self) -> Option<f64> {
        if self.script_scores.is_empty() {
            None
        } else {
            let sum: f64 = self.script_scores.iter().map(|(_, c)| c).sum();
            Some(sum / self.script_scores.len() as f64)
        }
    }

    pub fn text(&self) -> String {
        self.words.iter().map(OcrWord::text).filter(|w| !w.is_empty()).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrBlock {
    pub bbox: BBox,
    pub confidence: f64,
    pub paragraphs: Vec<OcrParagraph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrPage {
    pub page_index: u32,
    pub width_px: u32,
    pub height_px: u32,
    pub blocks: Vec<OcrBlock>,
}

impl OcrPage {
    /// Blocks, paragraphs and words in the given reading order. Words are
    /// joined by spaces, paragraphs by newlines and blocks by blank lines.
    pub fn text(&self) -> String {
        self.blocks
            .iter()
            .map(|b| {
                b.paragraphs.iter().map(OcrParagraph::text).filter(|p| !p.is_empty()).collect::<Vec<_>>().join("\n")
            })
            .filter(|b| !b.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcrFilterConfig {
    pub suppression_ratio: f64,
    pub h_sparse_max_gap_fraction: f64,
    pub v_sparse_max_gap_fraction: f64,
    pub max_overlap_fraction: f64,
    pub sparse_block_max_uncovered: f64,
    pub min_script_confidence: f64,
    pub max_flagged_paragraph_fraction: f64,
    pub merge_batch_pages: usize,
}

impl Default for OcrFilterConfig {
    fn default() -> Self {
        OcrFilterConfig {
            suppression_ratio: 0.8,
            h_sparse_max_gap_fraction: 0.5,
            v_sparse_max_gap_fraction: 0.5,
            max_overlap_fraction: 0.3,
            sparse_block_max_uncovered: 0.5,
            min_script_confidence: 0.7,
            max_flagged_paragraph_fraction: 0.3,
            merge_batch_pages: 4,
        }
    }
}

impl OcrFilterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.suppression_ratio > 0.0 && self.suppression_ratio <= 1.0) {
            return Err("ocr.suppression_ratio must be in (0, 1]".into());
        }
        let open = [
            ("h_sparse_max_gap_fraction", self.h_sparse_max_gap_fraction),
            ("v_sparse_max_gap_fraction", self.v_sparse_max_gap_fraction),
            ("max_overlap_fraction", self.max_overlap_fraction),
            ("sparse_block_max_uncovered", self.sparse_block_max_uncovered),
            ("min_script_confidence", self.min_script_confidence),
            ("max_flagged_paragraph_fraction", self.max_flagged_paragraph_fraction),
        ];
        for (name, v) in open {
            if !(v > 0.0 && v < 1.0) {
                return Err(format!("ocr.{name} = {v} must be in (0, 1)"));
            }
        }
        if self.merge_batch_pages == 0 {
            return Err("ocr.merge_batch_pages must be positive".into());
        }
        Ok(())
    }
}

/// Metadata gathered about a PDF before paying for OCR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfMeta {
    pub pdf_id: String,
    pub page_count: u32,
    pub ppi: u32,
    /// (fraction of page area covered by images, mean brightness 0 to 255)
    #[serde(default)]
    pub image_pages_sampled: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriageRules {
    pub min_pages: u32,
    pub max_pages: u32,
    pub min_ppi: u32,
    /// Sampled pages with images covering at least this fraction reject the PDF.
    pub max_image_area: f64,
    /// Sampled image pages at or below this brightness reject the PDF.
    pub min_brightness: f64,
}

impl Default for TriageRules {
    fn default() -> Self {
        TriageRules { min_pages: 25, max_pages: 2000, min_ppi: 300, max_image_area: 0.5, min_brightness: 200.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriageVerdict {
    Accept,
    Reject(&'static str),
}

pub fn triage_pdf(meta: &PdfMeta, rules: &TriageRules) -> TriageVerdict {
    if meta.page_count < rules.min_pages {
        return TriageVerdict::Reject("too_few_pages");
    }
    if meta.page_count > rules.max_pages {
        return TriageVerdict::Reject("too_many_pages");
    }
    if meta.ppi < rules.min_ppi {
        return TriageVerdict::Reject("low_ppi");
    }
    for &(area, brightness) in &meta.image_pages_sampled {
        if area >= rules.max_image_area {
            return TriageVerdict::Reject("image_area");
        }
        if area > 0.0 && brightness <= rules.min_brightness {
            return TriageVerdict::Reject("low_brightness");
        }
    }
    TriageVerdict::Accept
}

/// Merges pages into documents: maximal runs of consecutive page indices,
/// each cut into chunks of at most `batch` pages joined by a blank line.
pub fn assemble_documents(pages: &[(u32, String)], batch: usize, pdf_id: &str) -> Vec<Document> {
    assert!(batch > 0, "batch must be positive");
    let mut runs: Vec<&[(u32, String)]> = Vec::new();
    let mut start = 0;
    for i in 1..=pages.len() {
        if i == pages.len() || pages[i].0 != pages[i - 1].0 + 1 {
            if start < i {
                runs.push(&pages[start..i]);
            }
            start = i;
        }
    }

    runs.into_iter()
        .flat_map(|run| run.chunks(batch))
        .map(|chunk| {
            let first = chunk[0].0;
            let last = chunk[chunk.len() - 1].0;
            let text = chunk.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>().join("\n\n");
            let mut doc = Document::new(format!("{pdf_id}:p{first}-{last}"), Source::Pdf, text);
            doc.metadata.insert("pdf_id".into(), pdf_id.to_string());
            doc.metadata.insert("first_page".into(), first.to_string());
            doc.metadata.insert("last_page".into(), last.to_string());
            doc
        })
        .collect()
}

/// Outcome of running the page filters over one PDF.
#[derive(Debug, Default, Clone)]
pub struct PdfReport {
    pub pages_in: usize,
    pub pages_kept: usize,
    pub blocks_suppressed: usize,
    pub dropped_by_flag: BTreeMap<String, u64>,
}

/// Suppresses, flags and merges the pages of one PDF. Flagged pages are
/// removed and tallied under their first flag; pages without text are
/// removed as `empty_page`.
pub fn process_pages(pages: &[OcrPage], cfg: &OcrFilterConfig, pdf_id: &str) -> (Vec<Document>, PdfReport) {
    let mut report = PdfReport { pages_in: pages.len(), ..PdfReport::default() };
    let mut kept: Vec<(u32, String)> = Vec::new();

    let mut ordered: Vec<&OcrPage> = pages.iter().collect();
    ordered.sort_by_key(|p| p.page_index);
    for page in ordered {
        let suppressed = suppress_boxes(page, cfg.suppression_ratio);
        report.blocks_suppressed += page.blocks.len() - suppressed.blocks.len();
        let flags: BTreeSet<PageFlag> = page_flags(&suppressed, cfg);
        if let Some(first) = flags.iter().next() {
            *report.dropped_by_flag.entry(first.to_string()).or_insert(0) += 1;
            continue;
        }
        let text = suppressed.text();
        if text.trim().is_empty() {
            *report.dropped_by_flag.entry("empty_page".into()).or_insert(0) += 1;
            continue;
        }
        kept.push((page.page_index, text));
    }
    report.pages_kept = kept.len();
    (assemble_documents(&kept, cfg.merge_batch_pages, pdf_id), report)
}
