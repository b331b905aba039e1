//! Shared helpers for the integration and acceptance suites: seeded
//! random matrices, tie-robust dendrogram comparison, and an
//! independent Kruskal MST used as the single-linkage oracle.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use matchtree::dendro::{cut_height, Dendrogram, Partition};
use matchtree::score::condensed_len;
use matchtree::{DistanceMatrix, SimilarityMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Distance-matrix flavor: continuous draws have no exact ties,
/// quantized draws force plenty of them.
#[derive(Clone, Copy)]
pub enum Style {
    Continuous,
    Quantized(u32),
}

pub fn random_distances(rng: &mut ChaCha8Rng, n: usize, style: Style) -> DistanceMatrix {
    let ids = (0..n).map(|i| format!("img{i:03}")).collect();
    let d: Vec<f64> = (0..condensed_len(n))
        .map(|_| {
            let v: f64 = rng.random_range(0.01..1.0);
            match style {
                Style::Continuous => v,
                Style::Quantized(levels) => (v * f64::from(levels)).ceil() / f64::from(levels),
            }
        })
        .collect();
    DistanceMatrix::from_condensed(ids, d).unwrap()
}

pub fn random_similarity(rng: &mut ChaCha8Rng, n: usize) -> SimilarityMatrix {
    let ids = (0..n).map(|i| format!("img{i:03}")).collect();
    let s: Vec<f32> = (0..condensed_len(n))
        .map(|_| rng.random_range(0.0f32..=1.0))
        .collect();
    SimilarityMatrix::from_condensed(ids, s).unwrap()
}

pub fn heights(d: &Dendrogram) -> Vec<f64> {
    d.merges().iter().map(|s| s.height).collect()
}

/// Relative closeness with a tiny absolute floor for heights near zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-12)
}

/// Compare height multisets (both already sorted) within `rel`.
pub fn assert_heights_close(a: &Dendrogram, b: &Dendrogram, rel: f64, context: &str) {
    let (ha, hb) = (heights(a), heights(b));
    assert_eq!(ha.len(), hb.len(), "{context}: merge counts differ");
    for (x, y) in ha.iter().zip(&hb) {
        assert!(
            close(*x, *y, rel),
            "{context}: heights {x} vs {y} beyond relative {rel}"
        );
    }
}

/// A partition as a set of sorted member-id clusters, the
/// relabeling-invariant (and leaf-order-invariant) form.
pub fn partition_sets(p: &Partition) -> BTreeSet<Vec<String>> {
    let mut clusters: Vec<Vec<String>> = vec![Vec::new(); p.k()];
    for (id, label) in p.iter() {
        clusters[label as usize].push(id.to_string());
    }
    clusters
        .into_iter()
        .map(|mut c| {
            c.sort();
            c
        })
        .collect()
}

/// Thresholds strictly between distinct merge heights (plus one below
/// the first and one above the root), where cut results are immune to
/// last-ulp height jitter between engines.
pub fn robust_thresholds(a: &Dendrogram, rel: f64) -> Vec<f64> {
    let hs = heights(a);
    let mut cuts = vec![hs[0] - 1.0, hs[hs.len() - 1] + 1.0];
    for w in hs.windows(2) {
        // Skip ties and near-ties; cutting inside them is order-defined,
        // not structure-defined.
        if w[1] - w[0] > rel * 100.0 * w[1].abs().max(1.0) {
            cuts.push((w[0] + w[1]) / 2.0);
        }
    }
    cuts
}

/// Assert two dendrograms over the same leaves agree on the partition
/// at every robust height threshold.
pub fn assert_same_partitions(a: &Dendrogram, b: &Dendrogram, rel: f64, context: &str) {
    for h in robust_thresholds(a, rel) {
        let pa = partition_sets(&cut_height(a, h));
        let pb = partition_sets(&cut_height(b, h));
        assert_eq!(pa, pb, "{context}: partitions differ at height {h}");
    }
}

/// Independent MST construction (Kruskal with a full edge sort, union
/// by index) returning sorted edge weights.
pub fn kruskal_mst_weights(dist: &DistanceMatrix) -> Vec<f64> {
    let n = dist.n();
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(condensed_len(n));
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((dist.distance(i, j), i, j));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut weights = Vec::with_capacity(n - 1);
    for (w, i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            weights.push(w);
        }
    }
    weights.sort_by(f64::total_cmp);
    weights
}
