//! Reader for OCR layout JSON shaped like a Vision `fullTextAnnotation`.
//!
//! Accepted top-level shapes:
//!
//! * `{"responses": [{"fullTextAnnotation": {...}, "context": {"pageNumber": N}}, ...]}`
//!   (one response per PDF page, as written by asynchronous batch OCR)
//! * `{"fullTextAnnotation": {...}}`
//! * a bare annotation `{"pages": [...]}`
//!
//! Within an annotation, `pages[].blocks[].paragraphs[].words[].symbols[]`
//! is read. Every level may carry `boundingBox` (with `normalizedVertices`,
//! or pixel `vertices` scaled by the page size) and `confidence`.
//! Paragraph `property.detectedLanguages[].{languageCode, confidence}`
//! provide the script scores. Missing coordinates default to 0, matching
//! the upstream encoding that omits zero-valued fields. Other fields are
//! ignored.

use serde::Deserialize;

use super::{BBox, OcrBlock, OcrChar, OcrPage, OcrParagraph, OcrWord};

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct Vertex {
    x: f64,
    y: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct BoundingPoly {
    normalized_vertices: Vec<Vertex>,
    vertices: Vec<Vertex>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct DetectedLanguage {
    language_code: String,
    confidence: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct Property {
    detected_languages: Vec<DetectedLanguage>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct Symbol {
    text: String,
    confidence: f64,
    bounding_box: Option<BoundingPoly>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct Word {
    bounding_box: Option<BoundingPoly>,
    confidence: f64,
    symbols: Vec<Symbol>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct Paragraph {
    bounding_box: Option<BoundingPoly>,
    confidence: f64,
    property: Option<Property>,
    words: Vec<Word>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct Block {
    bounding_box: Option<BoundingPoly>,
    confidence: f64,
    paragraphs: Vec<Paragraph>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct Page {
    width: u32,
    height: u32,
    blocks: Vec<Block>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct Annotation {
    pages: Vec<Page>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct Context {
    page_number: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct Response {
    full_text_annotation: Option<Annotation>,
    context: Option<Context>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct VisionFile {
    responses: Vec<Response>,
    full_text_annotation: Option<Annotation>,
    pages: Vec<Page>,
}

fn to_bbox(poly: &Option<BoundingPoly>, width: u32, height: u32) -> BBox {
    let Some(poly) = poly else { return BBox::default() };
    let points: Vec<(f64, f64)> = if !poly.normalized_vertices.is_empty() {
        poly.normalized_vertices.iter().map(|v| (v.x, v.y)).collect()
    } else if width > 0 && height > 0 {
        poly.vertices.iter().map(|v| (v.x / width as f64, v.y / height as f64)).collect()
    } else {
        Vec::new()
    };
    BBox::from_vertices(&points).unwrap_or_default()
}

fn convert_page(page: &Page, page_index: u32) -> OcrPage {
    let (w, h) = (page.width, page.height);
    let blocks = page
        .blocks
        .iter()
        .map(|b| OcrBlock {
            bbox: to_bbox(&b.bounding_box, w, h),
            confidence: b.confidence,
            paragraphs: b
                .paragraphs
                .iter()
                .map(|p| OcrParagraph {
                    bbox: to_bbox(&p.bounding_box, w, h),
                    confidence: p.confidence,
                    script_scores: p
                        .property
                        .as_ref()
                        .map(|prop| {
                            prop.detected_languages
                                .iter()
                                .map(|d| (d.language_code.clone(), d.confidence))
                                .collect()
                        })
                        .unwrap_or_default(),
                    words: p
                        .words
                        .iter()
                        .map(|word| OcrWord {
                            bbox: to_bbox(&word.bounding_box, w, h),
                            confidence: word.confidence,
                            symbols: word
                                .symbols
                                .iter()
                                .map(|s| OcrChar {
                                    bbox: to_bbox(&s.bounding_box, w, h),
                                    confidence: s.confidence,
                                    text: s.text.clone(),
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        })
        .collect();
    OcrPage { page_index, width_px: w.max(1), height_px: h.max(1), blocks }
}

/// Parses one OCR JSON file into pages. Page indices come from
/// `context.pageNumber` when present, else 1-based file order.
pub fn parse_pages(json: &str) -> Result<Vec<OcrPage>, serde_json::Error> {
    let file: VisionFile = serde_json::from_str(json)?;
    let mut pages = Vec::new();
    if !file.responses.is_empty() {
        for (i, resp) in file.responses.iter().enumerate() {
            let number = resp.context.as_ref().and_then(|c| c.page_number).unwrap_or(i as u32 + 1);
            if let Some(ann) = &resp.full_text_annotation {
                for page in &ann.pages {
                    pages.push(convert_page(page, number));
                }
            }
        }
    } else {
        let list = file.full_text_annotation.map(|a| a.pages).unwrap_or(file.pages);
        for (i, page) in list.iter().enumerate() {
            pages.push(convert_page(page, i as u32 + 1));
        }
    }
    Ok(pages)
}
