//! Percentile thresholds and threshold filtering.

use super::LmError;

/// Nearest-rank percentile: `sorted[ceil(p / 100 * n) - 1]`.
pub fn calibrate_threshold(ppls: &[f64], percentile: f64) -> Result<f64, LmError> {
    if ppls.is_empty() {
        return Err(LmError::EmptyInput);
    }
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(LmError::Invalid(format!("percentile {percentile} outside (0, 100)")));
    }
    if ppls.iter().any(|p| p.is_nan()) {
        return Err(LmError::Invalid("perplexity is NaN".into()));
    }
    let mut sorted = ppls.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (percentile / 100.0 * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Keeps a document iff its perplexity is at most the threshold.
pub fn ppl_keep(perplexity: f64, threshold: f64) -> bool {
    perplexity <= threshold
}
