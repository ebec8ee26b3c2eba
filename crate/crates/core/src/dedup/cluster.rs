//! Band tables, candidate verification and union-find merging.

use std::collections::HashMap;

use rayon::prelude::*;
use xxhash_rust::xxh3::xxh3_64;

use super::{estimated_similarity, DedupError, LshPlan, MinHashSignature};

#[derive(Debug, Clone, PartialEq)]
pub struct DupCluster {
    pub representative: String,
    /// Sorted, including the representative.
    pub members: Vec<String>,
    /// Lowest estimated similarity between a member and the representative.
    pub est_similarity: f64,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index becomes the root so roots are order-independent.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn band_key(values: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    xxh3_64(&bytes)
}

/// Index pairs `(i, j)`, `i < j`, sharing at least one band, sorted and
/// deduplicated. Each band's table is built independently.
pub fn candidate_pairs(signatures: &[&[u64]], plan: &LshPlan) -> Vec<(u32, u32)> {
    let mut pairs: Vec<(u32, u32)> = (0..plan.bands)
        .into_par_iter()
        .flat_map_iter(|band| {
            let range = band * plan.rows..(band + 1) * plan.rows;
            let mut table: HashMap<u64, Vec<u32>> = HashMap::new();
            for (i, sig) in signatures.iter().enumerate() {
                table.entry(band_key(&sig[range.clone()])).or_default().push(i as u32);
            }
            let mut out = Vec::new();
            for bucket in table.values().filter(|b| b.len() > 1) {
                for (k, &i) in bucket.iter().enumerate() {
                    for &j in &bucket[k + 1..] {
                        out.push((i, j));
                    }
                }
            }
            out
        })
        .collect();
    pairs.par_sort_unstable();
    pairs.dedup();
    pairs
}

/// Clusters signatures. `verify(i, j)` decides whether a candidate pair is
/// a duplicate; `pinned[i]` marks documents that must be kept.
pub(crate) fn cluster_with(
    signatures: &[MinHashSignature],
    pinned: &[bool],
    plan: &LshPlan,
    verify: impl Fn(usize, usize) -> bool + Sync,
) -> Result<Vec<DupCluster>, DedupError> {
    if let Some(s) = signatures.iter().find(|s| s.values.len() != plan.num_perm) {
        return Err(DedupError::PlanMismatch { doc_id: s.doc_id.clone(), len: s.values.len(), num_perm: plan.num_perm });
    }
    if plan.bands * plan.rows != plan.num_perm {
        return Err(DedupError::InvalidPlan);
    }

    // Identical signatures are merged up front so large exact-duplicate
    // groups do not produce quadratic candidate lists.
    let mut order: Vec<usize> = (0..signatures.len()).collect();
    order.sort_by(|&a, &b| signatures[a].doc_id.cmp(&signatures[b].doc_id));
    let mut uf = UnionFind::new(signatures.len());
    let mut first_by_sig: HashMap<&[u64], usize> = HashMap::new();
    let mut unique: Vec<usize> = Vec::new();
    for &i in &order {
        match first_by_sig.get(signatures[i].values.as_slice()) {
            Some(&j) if verify(j, i) => uf.union(j, i),
            Some(_) => unique.push(i),
            None => {
                first_by_sig.insert(&signatures[i].values, i);
                unique.push(i);
            }
        }
    }

    let sigs: Vec<&[u64]> = unique.iter().map(|&i| signatures[i].values.as_slice()).collect();
    let pairs = candidate_pairs(&sigs, plan);
    let accepted: Vec<(usize, usize)> = pairs
        .par_iter()
        .map(|&(a, b)| (unique[a as usize], unique[b as usize]))
        .filter(|&(i, j)| verify(i, j))
        .collect();
    for (i, j) in accepted {
        uf.union(i, j);
    }

    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..signatures.len() {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    let mut clusters: Vec<DupCluster> = groups
        .into_values()
        .filter(|g| g.len() > 1)
        .map(|g| {
            let rep = *g
                .iter()
                .min_by(|&&a, &&b| {
                    pinned[b].cmp(&pinned[a]).then_with(|| signatures[a].doc_id.cmp(&signatures[b].doc_id))
                })
                .expect("non-empty group");
            let est = g
                .iter()
                .filter(|&&i| i != rep)
                .map(|&i| estimated_similarity(&signatures[rep].values, &signatures[i].values))
                .fold(1.0, f64::min);
            let mut members: Vec<String> = g.iter().map(|&i| signatures[i].doc_id.clone()).collect();
            members.sort();
            DupCluster { representative: signatures[rep].doc_id.clone(), members, est_similarity: est }
        })
        .collect();
    clusters.sort_by(|a, b| a.representative.cmp(&b.representative));
    Ok(clusters)
}

/// Clusters by estimated similarity at the plan's threshold.
pub fn cluster(signatures: &[MinHashSignature], plan: &LshPlan) -> Result<Vec<DupCluster>, DedupError> {
    let pinned = vec![false; signatures.len()];
    cluster_with(signatures, &pinned, plan, |i, j| {
        estimated_similarity(&signatures[i].values, &signatures[j].values) >= plan.threshold
    })
}
