//! Reference agglomerative engine.
//!
//! Scans every active cluster pair for the global minimum distance and
//! merges it, n-1 times. Ties go to the pair with the smallest cluster
//! index, then the smallest partner index, where "index" is the
//! cluster's current position in the active list (a merged cluster
//! takes the lower position of its parents). O(n^3) time and O(n^2)
//! extra memory: this engine exists to be obviously correct, as the
//! oracle the fast engines are tested against.

use super::{lw, LinkageMethod, MergeStep};
use crate::score::condensed_index;

pub(super) fn run(d: &[f64], n: usize, method: LinkageMethod) -> Vec<MergeStep> {
    debug_assert_eq!(d.len(), n * (n - 1) / 2);
    // Full square table indexed by slot; slot k starts as object k and
    // is reused for the merged cluster.
    let mut table = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = d[condensed_index(n, i, j)];
            table[i * n + j] = v;
            table[j * n + i] = v;
        }
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut labels: Vec<usize> = (0..n).collect();
    let mut sizes: Vec<u32> = vec![1; n];
    let mut steps = Vec::with_capacity(n - 1);
    while active.len() > 1 {
        // Strict < in row-major scan order realizes the tie-break.
        let (mut bp, mut bq, mut best) = (0, 1, f64::INFINITY);
        for p in 0..active.len() {
            for q in (p + 1)..active.len() {
                let dv = table[active[p] * n + active[q]];
                if dv < best {
                    best = dv;
                    bp = p;
                    bq = q;
                }
            }
        }
        let (sa, sb) = (active[bp], active[bq]);
        let (n_a, n_b) = (sizes[sa], sizes[sb]);
        steps.push(MergeStep {
            left: labels[sa],
            right: labels[sb],
            height: best,
            size: (n_a + n_b) as usize,
        });
        for &sx in &active {
            if sx == sa || sx == sb {
                continue;
            }
            let nd = lw::update(
                method,
                table[sa * n + sx],
                table[sb * n + sx],
                best,
                n_a,
                n_b,
                sizes[sx],
            );
            table[sa * n + sx] = nd;
            table[sx * n + sa] = nd;
        }
        labels[sa] = n + steps.len() - 1;
        sizes[sa] = n_a + n_b;
        active.remove(bq);
    }
    steps
}
