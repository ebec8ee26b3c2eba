//! Fuzzy deduplication with MinHash and LSH over word n-gram shingles.

pub mod bands;
pub mod cluster;

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

pub use bands::{plan_bands, LshPlan};
pub use cluster::{candidate_pairs, cluster, DupCluster};

/// Mersenne prime 2^61 - 1, the modulus of the permutation family.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Error, PartialEq)]
pub enum DedupError {
    #[error("document has no shingles")]
    EmptyShingles,
    #[error("signature of `{doc_id}` has {len} values, plan expects {num_perm}")]
    PlanMismatch { doc_id: String, len: usize, num_perm: usize },
    #[error("bands * rows does not equal num_perm")]
    InvalidPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    pub threshold: f64,
    pub num_perm: usize,
    pub ngram: usize,
    pub seed: u64,
    /// Verify candidates by exact shingle Jaccard instead of the estimate.
    pub exact_verification: bool,
    /// Sources whose documents are never dropped and win representative
    /// selection, e.g. `["web", "pdf"]` when deduplicating external data
    /// against a verified set.
    pub pin_sources: Vec<String>,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            threshold: 0.7,
            num_perm: 256,
            ngram: 5,
            seed: 1,
            exact_verification: false,
            pin_sources: Vec::new(),
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err("dedup.threshold must be in (0, 1)".into());
        }
        if self.num_perm == 0 || self.num_perm > 4096 {
            return Err("dedup.num_perm must be between 1 and 4096".into());
        }
        if self.ngram == 0 {
            return Err("dedup.ngram must be positive".into());
        }
        for s in &self.pin_sources {
            if crate::model::Source::parse(s).is_none() {
                return Err(format!("dedup.pin_sources: unknown source `{s}`"));
            }
        }
        Ok(())
    }

    pub fn plan(&self) -> LshPlan {
        plan_bands(self.threshold, self.num_perm, self.seed)
    }
}

/// Hashes of each run of `n` consecutive lowercased words. Texts with fewer
/// than `n` words have no shingles.
pub fn shingle(text: &str, n: usize) -> BTreeSet<u64> {
    let lowered = text.to_lowercase();
    let words: Vec<&str> = lowered.split_whitespace().collect();
    if n == 0 || words.len() < n {
        return BTreeSet::new();
    }
    words.windows(n).map(|w| xxh3_64(w.join(" ").as_bytes())).collect()
}

/// The `(a * x + b) mod p` permutation family drawn from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MinHasher {
    a: Vec<u64>,
    b: Vec<u64>,
}

impl MinHasher {
    pub fn new(num_perm: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Vec::with_capacity(num_perm);
        let mut b = Vec::with_capacity(num_perm);
        for _ in 0..num_perm {
            a.push(rng.gen_range(1..MERSENNE_61));
            b.push(rng.gen_range(0..MERSENNE_61));
        }
        MinHasher { a, b }
    }

    pub fn num_perm(&self) -> usize {
        self.a.len()
    }

    pub fn signature(&self, shingles: &BTreeSet<u64>) -> Result<Vec<u64>, DedupError> {
        if shingles.is_empty() {
            return Err(DedupError::EmptyShingles);
        }
        let p = MERSENNE_61 as u128;
        let mut out = vec![u64::MAX; self.a.len()];
        for &h in shingles {
            let x = (h % MERSENNE_61) as u128;
            for (k, slot) in out.iter_mut().enumerate() {
                let v = ((self.a[k] as u128 * x + self.b[k] as u128) % p) as u64;
                if v < *slot {
                    *slot = v;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinHashSignature {
    pub doc_id: String,
    pub values: Vec<u64>,
}

pub fn minhash(doc_id: &str, shingles: &BTreeSet<u64>, plan: &LshPlan) -> Result<MinHashSignature, DedupError> {
    let values = MinHasher::new(plan.num_perm, plan.seed).signature(shingles)?;
    Ok(MinHashSignature { doc_id: doc_id.to_string(), values })
}

/// Fraction of positions where two signatures agree.
pub fn estimated_similarity(a: &[u64], b: &[u64]) -> f64 {
    if a.is_empty() || a.len() != b.len() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

pub fn jaccard(a: &BTreeSet<u64>, b: &BTreeSet<u64>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub struct DedupDoc<'a> {
    pub doc_id: &'a str,
    pub text: &'a str,
    pub pinned: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DedupResult {
    pub clusters: Vec<DupCluster>,
    /// Sorted ids to drop as `fuzzy_duplicate`.
    pub dropped: Vec<String>,
    /// Documents too short to shingle.
    pub exempt: usize,
}

/// Deduplicates one language's documents. Signatures are computed in the
/// current rayon pool; the result does not depend on its size or on input
/// order.
pub fn dedup(docs: &[DedupDoc<'_>], cfg: &DedupConfig) -> Result<DedupResult, DedupError> {
    let plan = cfg.plan();
    let hasher = MinHasher::new(plan.num_perm, plan.seed);
    let shingled: Vec<(usize, BTreeSet<u64>)> = docs
        .par_iter()
        .enumerate()
        .map(|(i, d)| (i, shingle(d.text, cfg.ngram)))
        .filter(|(_, s)| !s.is_empty())
        .collect();
    let exempt = docs.len() - shingled.len();
    let signatures: Vec<MinHashSignature> = shingled
        .par_iter()
        .map(|(i, s)| {
            let values = hasher.signature(s).expect("non-empty shingles");
            MinHashSignature { doc_id: docs[*i].doc_id.to_string(), values }
        })
        .collect();
    let pinned: Vec<bool> = shingled.iter().map(|(i, _)| docs[*i].pinned).collect();

    let clusters = if cfg.exact_verification {
        cluster::cluster_with(&signatures, &pinned, &plan, |i, j| {
            jaccard(&shingled[i].1, &shingled[j].1) >= plan.threshold
        })?
    } else {
        cluster::cluster_with(&signatures, &pinned, &plan, |i, j| {
            estimated_similarity(&signatures[i].values, &signatures[j].values) >= plan.threshold
        })?
    };

    let pinned_ids: BTreeSet<&str> = docs.iter().filter(|d| d.pinned).map(|d| d.doc_id).collect();
    let mut dropped: Vec<String> = clusters
        .iter()
        .flat_map(|c| c.members.iter().filter(move |m| **m != c.representative))
        .filter(|m| !pinned_ids.contains(m.as_str()))
        .cloned()
        .collect();
    dropped.sort();
    Ok(DedupResult { clusters, dropped, exempt })
}

/// Writes clusters as `{representative, members, est_similarity}` lines.
pub fn write_audit<W: Write>(mut w: W, clusters: &[DupCluster]) -> std::io::Result<()> {
    for c in clusters {
        let line = serde_json::json!({
            "representative": c.representative,
            "members": c.members,
            "est_similarity": c.est_similarity,
        });
        writeln!(w, "{line}")?;
    }
    Ok(())
}
