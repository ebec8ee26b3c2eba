//! Threshold filters over [`DocStats`].

use crate::analyze::DocStats;
use crate::config::FilterThresholds;
use crate::model::{Stage, StageVerdict};

/// Documents below this many words skip the ratio filters.
pub const MIN_WORDS: u64 = 5;

/// Names of every filter that rejects `stats`, sorted.
pub fn failing_filters(stats: &DocStats, t: &FilterThresholds) -> Vec<String> {
    let mut reasons: Vec<&str> = Vec::new();

    if stats.lines_count < t.min_lines || stats.word_count == 0 {
        reasons.push("line_count");
    }
    if stats.word_count < MIN_WORDS {
        reasons.push("too_short");
    } else {
        let words = stats.word_count as f64;
        if stats.nsfw_words_count as f64 / words > t.max_nsfw_ratio {
            reasons.push("nsfw_ratio");
        }
        if stats.char_count > 0
            && stats.non_li_character_count as f64 / stats.char_count as f64 > t.max_non_li_ratio
        {
            reasons.push("non_li_ratio");
        }
        if stats.mean_line_length < t.min_mean_line_length {
            reasons.push("mean_line_len");
        }
        if stats.word_rep_5_score > t.max_word_rep_ratio {
            reasons.push("word_rep");
        }
        if stats.char_rep_10_score > t.max_char_rep_ratio {
            reasons.push("char_rep");
        }
    }

    let mut reasons: Vec<String> = reasons.into_iter().map(str::to_string).collect();
    reasons.sort();
    reasons
}

pub fn apply_filters(stats: &DocStats, t: &FilterThresholds, timestamp: i64) -> StageVerdict {
    let reasons = failing_filters(stats, t);
    if reasons.is_empty() {
        StageVerdict::keep(Stage::Flag, timestamp)
    } else {
        StageVerdict::drop(Stage::Flag, reasons, timestamp)
    }
}
