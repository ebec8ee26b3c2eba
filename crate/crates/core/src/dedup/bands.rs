//! Choosing the LSH band/row split.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LshPlan {
    pub num_perm: usize,
    pub bands: usize,
    pub rows: usize,
    pub seed: u64,
    pub threshold: f64,
}

const STEPS: usize = 2000;

/// Composite Simpson's rule on an even number of steps.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / STEPS as f64;
    let mut sum = f(a) + f(b);
    for i in 1..STEPS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Probability that two documents with similarity `s` share a band.
pub fn collision_probability(s: f64, bands: usize, rows: usize) -> f64 {
    1.0 - (1.0 - s.powi(rows as i32)).powi(bands as i32)
}

pub fn false_positive_area(threshold: f64, bands: usize, rows: usize) -> f64 {
    simpson(|s| collision_probability(s, bands, rows), 0.0, threshold)
}

pub fn false_negative_area(threshold: f64, bands: usize, rows: usize) -> f64 {
    simpson(|s| 1.0 - collision_probability(s, bands, rows), threshold, 1.0)
}

/// The divisor pair `bands * rows == num_perm` minimizing the sum of the
/// false-positive and false-negative areas. Ties go to fewer bands.
pub fn plan_bands(threshold: f64, num_perm: usize, seed: u64) -> LshPlan {
    assert!(threshold > 0.0 && threshold < 1.0, "threshold must be in (0, 1)");
    assert!(num_perm > 0, "num_perm must be positive");
    let mut best = (f64::INFINITY, 1, num_perm);
    for bands in 1..=num_perm {
        if num_perm % bands != 0 {
            continue;
        }
        let rows = num_perm / bands;
        let err = false_positive_area(threshold, bands, rows) + false_negative_area(threshold, bands, rows);
        if err < best.0 {
            best = (err, bands, rows);
        }
    }
    LshPlan { num_perm, bands: best.1, rows: best.2, seed, threshold }
}
