//! Bounding-box geometry: suppression and page-level layout flags.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{OcrFilterConfig, OcrPage};

/// Axis-aligned rectangle in page-normalized coordinates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox { x0: x0.min(x1), y0: y0.min(y1), x1: x0.max(x1), y1: y0.max(y1) }
    }

    /// Rectangle spanned by the min/max of the vertex coordinates, clamped
    /// to the unit square.
    pub fn from_vertices(points: &[(f64, f64)]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let clamp = |v: f64| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        let (mut x0, mut y0, mut x1, mut y1) = (1.0f64, 1.0f64, 0.0f64, 0.0f64);
        for &(x, y) in points {
            let (x, y) = (clamp(x), clamp(y));
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Some(BBox { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Calls `f(i, j)` for every pair `i < j` whose x-extents overlap with
/// positive length. Pairs that merely touch are skipped since their
/// intersection is empty.
fn for_each_x_overlapping_pair(boxes: &[BBox], mut f: impl FnMut(usize, usize)) {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[a].x0.total_cmp(&boxes[b].x0).then(a.cmp(&b)));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if boxes[j].x0 >= boxes[i].x1 {
                break;
            }
            f(i.min(j), i.max(j));
        }
    }
}

/// Indices of boxes to suppress, computed against the full original list.
///
/// For each overlapping pair, the smaller box (on equal areas, the one
/// earlier in reading order) is suppressed when the intersection covers
/// more than `ratio` of its area. Zero-area boxes are always removed.
pub fn suppression_set(boxes: &[BBox], ratio: f64) -> BTreeSet<usize> {
    let mut removed: BTreeSet<usize> =
        boxes.iter().enumerate().filter(|(_, b)| b.area() <= 0.0).map(|(i, _)| i).collect();
    let degenerate = removed.clone();

    for_each_x_overlapping_pair(boxes, |i, j| {
        if degenerate.contains(&i) || degenerate.contains(&j) {
            return;
        }
        let inter = boxes[i].intersection_area(&boxes[j]);
        if inter <= 0.0 {
            return;
        }
        let (ai, aj) = (boxes[i].area(), boxes[j].area());
        let smaller = if aj < ai { j } else { i };
        if inter / boxes[smaller].area() > ratio {
            removed.insert(smaller);
        }
    });
    removed
}

/// Removes suppressed blocks from a page. Surviving blocks are untouched
/// and keep their relative order.
pub fn suppress_boxes(page: &OcrPage, ratio: f64) -> OcrPage {
    let boxes: Vec<BBox> = page.blocks.iter().map(|b| b.bbox).collect();
    let removed = suppression_set(&boxes, ratio);
    for (i, b) in boxes.iter().enumerate() {
        if b.area() <= 0.0 {
            log::warn!(target: "prepare", "page {}: dropping degenerate block {i}", page.page_index);
        }
    }
    let blocks = page
        .blocks
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, b)| b.clone())
        .collect();
    OcrPage { blocks, ..page.clone() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageFlag {
    HSparse,
    VSparse,
    HighOverlap,
    SparseBlock,
    LowScriptConf,
}

impl PageFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PageFlag::HSparse => "h_sparse",
            PageFlag::VSparse => "v_sparse",
            PageFlag::HighOverlap => "high_overlap",
            PageFlag::SparseBlock => "sparse_block",
            PageFlag::LowScriptConf => "low_script_conf",
        }
    }
}

impl fmt::Display for PageFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Largest stretch of [0, 1] not covered by any of `intervals`, page
/// margins included. An empty list leaves the whole axis uncovered.
pub fn largest_gap(intervals: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut iv: Vec<(f64, f64)> = intervals
        .into_iter()
        .map(|(a, b)| (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0)))
        .filter(|(a, b)| b > a)
        .collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gap = 0.0f64;
    let mut covered_to = 0.0f64;
    for (a, b) in iv {
        if a > covered_to {
            gap = gap.max(a - covered_to);
        }
        covered_to = covered_to.max(b);
    }
    gap.max(1.0 - covered_to)
}

/// Σ pairwise block intersections over Σ block areas.
pub fn overlap_fraction(boxes: &[BBox]) -> f64 {
    let total: f64 = boxes.iter().map(BBox::area).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut inter = 0.0;
    for_each_x_overlapping_pair(boxes, |i, j| inter += boxes[i].intersection_area(&boxes[j]));
    inter / total
}

pub fn page_flags(page: &OcrPage, cfg: &OcrFilterConfig) -> BTreeSet<PageFlag> {
    let mut flags = BTreeSet::new();
    let boxes: Vec<BBox> = page.blocks.iter().map(|b| b.bbox).collect();

    if largest_gap(boxes.iter().map(|b| (b.x0, b.x1))) > cfg.h_sparse_max_gap_fraction {
        flags.insert(PageFlag::HSparse);
    }
    if largest_gap(boxes.iter().map(|b| (b.y0, b.y1))) > cfg.v_sparse_max_gap_fraction {
        flags.insert(PageFlag::VSparse);
    }
    if overlap_fraction(&boxes) > cfg.max_overlap_fraction {
        flags.insert(PageFlag::HighOverlap);
    }

    let sparse = page.blocks.iter().any(|block| {
        let area = block.bbox.area();
        if area <= 0.0 {
            return false;
        }
        let covered: f64 = block.paragraphs.iter().map(|p| p.bbox.area()).sum();
        (area - covered) / area > cfg.sparse_block_max_uncovered
    });
    if sparse {
        flags.insert(PageFlag::SparseBlock);
    }

    let (mut scored, mut low) = (0usize, 0usize);
    for para in page.blocks.iter().flat_map(|b| &b.paragraphs) {
        if let Some(mean) = para.mean_script_confidence() {
            scored += 1;
            if mean < cfg.min_script_confidence {
                low += 1;
            }
        }
    }
    if scored > 0 && low as f64 / scored as f64 > cfg.max_flagged_paragraph_fraction {
        flags.insert(PageFlag::LowScriptConf);
    }

    flags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocr::{OcrBlock, OcrParagraph};

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1)
    }

    #[test]
    fn contained_box_suppressed() {
        let boxes = [b(0.0, 0.0, 1.0, 1.0), b(0.2, 0.2, 0.6, 0.6)];
        assert_eq!(suppression_set(&boxes, 0.9), BTreeSet::from([1]));
    }

    #[test]
    fn disjoint_boxes_kept() {
        let boxes = [b(0.0, 0.0, 0.4, 0.4), b(0.5, 0.5, 0.9, 0.9)];
        assert!(suppression_set(&boxes, 0.9).is_empty());
    }

    #[test]
    fn partial_overlap_below_ratio() {
        // Intersection 0.1 over the smaller area 0.5 is 0.2.
        let boxes = [b(0.0, 0.0, 0.5, 1.0), b(0.4, 0.0, 1.0, 1.0)];
        let inter = boxes[0].intersection_area(&boxes[1]);
        assert!((inter / boxes[0].area() - 0.2).abs() < 1e-12);
        assert!(suppression_set(&boxes, 0.9).is_empty());
    }

    #[test]
    fn equal_area_tie_drops_earlier_box() {
        let boxes = [b(0.0, 0.0, 0.5, 0.5), b(0.0, 0.0, 0.5, 0.5)];
        assert_eq!(suppression_set(&boxes, 0.8), BTreeSet::from([0]));
    }

    #[test]
    fn degenerate_boxes_removed() {
        let boxes = [b(0.1, 0.1, 0.1, 0.5), b(0.0, 0.0, 1.0, 1.0)];
        assert_eq!(suppression_set(&boxes, 0.8), BTreeSet::from([0]));
    }

    #[test]
    fn gaps() {
        assert!((largest_gap([(0.0, 0.1), (0.9, 1.0)]) - 0.8).abs() < 1e-12);
        assert_eq!(largest_gap([(0.0, 1.0)]), 0.0);
        assert_eq!(largest_gap(std::iter::empty()), 1.0);
        // Margins count.
        assert!((largest_gap([(0.0, 0.3)]) - 0.7).abs() < 1e-12);
        // Overlapping intervals merge.
        assert!((largest_gap([(0.0, 0.5), (0.2, 0.6), (0.7, 1.0)]) - 0.1).abs() < 1e-12);
    }

    fn block(bbox: BBox, paras: Vec<(BBox, f64)>) -> OcrBlock {
        OcrBlock {
            bbox,
            confidence: 0.99,
            paragraphs: paras
                .into_iter()
                .map(|(pb, conf)| OcrParagraph {
                    bbox: pb,
                    confidence: conf,
                    script_scores: vec![("hi".into(), conf)],
                    words: vec![],
                })
                .collect(),
        }
    }

    fn page(blocks: Vec<OcrBlock>) -> OcrPage {
        OcrPage { page_index: 1, width_px: 1000, height_px: 1400, blocks }
    }

    #[test]
    fn fully_covered_page_has_no_flags() {
        let full = b(0.0, 0.0, 1.0, 1.0);
        let p = page(vec![block(full, vec![(full, 0.99)])]);
        assert!(page_flags(&p, &OcrFilterConfig::default()).is_empty());
    }

    #[test]
    fn two_narrow_columns_are_h_sparse() {
        let l = b(0.0, 0.0, 0.1, 1.0);
        let r = b(0.9, 0.0, 1.0, 1.0);
        let p = page(vec![block(l, vec![(l, 0.99)]), block(r, vec![(r, 0.99)])]);
        assert_eq!(page_flags(&p, &OcrFilterConfig::default()), BTreeSet::from([PageFlag::HSparse]));
    }

    #[test]
    fn mostly_empty_block_is_sparse() {
        let full = b(0.0, 0.0, 1.0, 1.0);
        let p = page(vec![block(full, vec![(b(0.0, 0.0, 1.0, 0.2), 0.99)])]);
        assert_eq!(
            page_flags(&p, &OcrFilterConfig::default()),
            BTreeSet::from([PageFlag::SparseBlock])
        );
    }

    #[test]
    fn low_script_confidence() {
        let full = b(0.0, 0.0, 1.0, 1.0);
        let halves = vec![(b(0.0, 0.0, 1.0, 0.5), 0.2), (b(0.0, 0.5, 1.0, 1.0), 0.9)];
        let p = page(vec![block(full, halves)]);
        // One of two paragraphs below 0.7 is 0.5 > 0.3.
        assert!(page_flags(&p, &OcrFilterConfig::default()).contains(&PageFlag::LowScriptConf));
    }

    #[test]
    fn heavy_overlap() {
        let a = b(0.0, 0.0, 1.0, 1.0);
        let p = page(vec![block(a, vec![(a, 0.99)]), block(a, vec![(a, 0.99)])]);
        // Intersection 1.0 over total area 2.0.
        assert!(page_flags(&p, &OcrFilterConfig::default()).contains(&PageFlag::HighOverlap));
    }
}
