//! Single linkage via a minimum spanning tree.
//!
//! Prim's algorithm over the condensed matrix finds the MST in O(n^2)
//! time and O(n) extra memory. Its edges, taken in nondecreasing weight
//! order, are exactly the single-link merges: each edge joins the two
//! clusters containing its endpoints at a height equal to its weight
//! (the Gower-Ross equivalence). Heights come straight from matrix
//! entries with no arithmetic, so they are bit-exact.

use super::MergeStep;
use crate::score::condensed_index;

pub(super) fn run(d: &[f64], n: usize) -> Vec<MergeStep> {
    let idx = |i: usize, j: usize| {
        if i < j {
            condensed_index(n, i, j)
        } else {
            condensed_index(n, j, i)
        }
    };
    // Prim from vertex 0: best_d[v] is the lightest edge from v into the
    // tree so far, best_to[v] its tree endpoint.
    let mut in_tree = vec![false; n];
    let mut best_d = vec![f64::INFINITY; n];
    let mut best_to = vec![0u32; n];
    let mut edges: Vec<(f64, u32, u32)> = Vec::with_capacity(n - 1);
    let mut current = 0usize;
    in_tree[0] = true;
    for _ in 1..n {
        let mut nxt = usize::MAX;
        let mut nd = f64::INFINITY;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let dv = d[idx(current, v)];
            if dv < best_d[v] {
                best_d[v] = dv;
                best_to[v] = current as u32;
            }
            if best_d[v] < nd {
                nd = best_d[v];
                nxt = v;
            }
        }
        edges.push((nd, best_to[nxt], nxt as u32));
        in_tree[nxt] = true;
        current = nxt;
    }
    // Stable sort keeps discovery order among equal weights, so ties
    // resolve deterministically.
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Replay the edges as merges. Union-find over leaves; each root
    // carries the label and size of its current cluster.
    let mut parent: Vec<u32> = (0..n as u32).collect();
    let mut labels: Vec<usize> = (0..n).collect();
    let mut sizes: Vec<u32> = vec![1; n];
    let mut steps = Vec::with_capacity(n - 1);
    for (t, &(w, u, v)) in edges.iter().enumerate() {
        let ru = find(&mut parent, u) as usize;
        let rv = find(&mut parent, v) as usize;
        debug_assert_ne!(ru, rv);
        steps.push(MergeStep {
            left: labels[ru],
            right: labels[rv],
            height: w,
            size: (sizes[ru] + sizes[rv]) as usize,
        });
        parent[rv] = ru as u32;
        labels[ru] = n + t;
        sizes[ru] += sizes[rv];
    }
    steps
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    // Path halving.
    while parent[x as usize] != x {
        let grand = parent[parent[x as usize] as usize];
        parent[x as usize] = grand;
        x = grand;
    }
    x
}
