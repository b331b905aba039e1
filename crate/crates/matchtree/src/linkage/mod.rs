/*!
Agglomerative clustering of a [`DistanceMatrix`] into a [`Dendrogram`].

Three linkages are supported: single (minimum cross-pair), complete
(maximum cross-pair), and Ward (minimum-variance merge cost). Two
engine families implement them:

- [`cluster`]: the production path. Single linkage runs through a
  minimum spanning tree; complete and Ward keep per-cluster nearest-
  neighbor caches and fold the condensed matrix in place under the
  Lance-Williams recurrence. Both take O(n^2) time on typical inputs
  and only O(n) working memory beyond the condensed matrix, which is
  consumed as the scratch buffer.
- [`cluster_naive`]: an O(n^3) reference that re-scans every cluster
  pair for the global minimum each step. It is the oracle the fast
  engines are verified against and is fine up to a few hundred objects.

Complete and Ward pick the same merge as the reference at every step,
ties included (smallest slot pair wins), so those two engines agree
with it exactly. Single linkage guarantees the height multiset and the
partition at every height; when ties allow several equally valid merge
orders, the order itself may differ from the reference.

Both emit the same canonical form: merges sorted by height (stable in
emission order, so equal heights keep a deterministic order), leaves
numbered `0..n`, the merge at sorted position `t` numbered `n + t`, and
each row's children ordered id-ascending. All three linkages are
monotone, so heights come out nondecreasing; Ward heights additionally
pass through a running-max clamp because the recurrence can round a
merge one ulp under its predecessor even though exact arithmetic never
would (see `enforce_monotone`).

Ward follows the Ward.D convention by default: the Lance-Williams
recurrence applied to the dissimilarities exactly as supplied, which is
what classic R-side implementations do and what face-similarity studies
built on them report. [`WardVariant::D2`] instead squares the input
distances and takes the square root of the resulting heights, the
textbook squared-Euclidean formulation.
*/

use crate::dendro::Dendrogram;
use crate::score::DistanceMatrix;
use crate::Error;
use std::fmt;
use std::str::FromStr;

mod lw;
mod mst;
mod naive;
mod nn;

/// Inter-cluster distance rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkageMethod {
    /// Minimum cross-pair distance.
    Single,
    /// Maximum cross-pair distance.
    Complete,
    /// Minimum-variance merge cost via the Lance-Williams recurrence.
    Ward,
}

impl LinkageMethod {
    pub const ALL: [LinkageMethod; 3] = [
        LinkageMethod::Single,
        LinkageMethod::Complete,
        LinkageMethod::Ward,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkageMethod::Single => "single",
            LinkageMethod::Complete => "complete",
            LinkageMethod::Ward => "ward",
        }
    }
}

impl FromStr for LinkageMethod {
    type Err = Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(LinkageMethod::Single),
            "complete" => Ok(LinkageMethod::Complete),
            "ward" => Ok(LinkageMethod::Ward),
            other => Err(Error::InvalidConfig(format!(
                "unknown linkage method {other:?} (expected single, complete, or ward)"
            ))),
        }
    }
}

impl fmt::Display for LinkageMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which convention Ward heights follow; ignored by the other methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WardVariant {
    /// Lance-Williams recurrence on the distances as supplied.
    #[default]
    D,
    /// Recurrence on squared distances, heights square-rooted back.
    D2,
}

/// One merge: children `left < right` by node id, the dissimilarity
/// `height` at which they joined, and the leaf count of the new node.
///
/// Node ids: leaf `i` is `i`; the cluster created by the merge at
/// (height-sorted) step `t` is `n + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeStep {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Cluster with the default Ward convention. Consumes the matrix: its
/// condensed buffer becomes the engine's scratch space.
pub fn cluster(dist: DistanceMatrix, method: LinkageMethod) -> Dendrogram {
    cluster_with(dist, method, WardVariant::default())
}

/// [`cluster`] with an explicit Ward variant.
pub fn cluster_with(dist: DistanceMatrix, method: LinkageMethod, ward: WardVariant) -> Dendrogram {
    let (ids, mut d) = dist.into_parts();
    let n = ids.len();
    advise_huge_pages(&d);
    let square = ward == WardVariant::D2 && method == LinkageMethod::Ward;
    if square {
        for v in d.iter_mut() {
            *v *= *v;
        }
    }
    let mut steps = match method {
        LinkageMethod::Single => mst::run(&d, n),
        LinkageMethod::Complete | LinkageMethod::Ward => nn::run(&mut d, n, method),
    };
    drop(d);
    if square {
        for s in steps.iter_mut() {
            s.height = s.height.sqrt();
        }
    }
    enforce_monotone(&mut steps);
    canonicalize(&mut steps, n);
    Dendrogram::from_linkage(ids, steps)
}

/// Cluster with the O(n^3) reference engine and the default Ward
/// convention.
pub fn cluster_naive(dist: &DistanceMatrix, method: LinkageMethod) -> Dendrogram {
    cluster_naive_with(dist, method, WardVariant::default())
}

/// [`cluster_naive`] with an explicit Ward variant.
pub fn cluster_naive_with(
    dist: &DistanceMatrix,
    method: LinkageMethod,
    ward: WardVariant,
) -> Dendrogram {
    let n = dist.n();
    let square = ward == WardVariant::D2 && method == LinkageMethod::Ward;
    let mut d = dist.condensed().to_vec();
    if square {
        for v in d.iter_mut() {
            *v *= *v;
        }
    }
    let mut steps = naive::run(&d, n, method);
    if square {
        for s in steps.iter_mut() {
            s.height = s.height.sqrt();
        }
    }
    enforce_monotone(&mut steps);
    canonicalize(&mut steps, n);
    Dendrogram::from_linkage(dist.image_ids().to_vec(), steps)
}

/// Clamp emitted heights to a running maximum. Every supported linkage
/// is monotone in exact arithmetic, but the Ward recurrence evaluates
/// algebraically equal distances along different floating-point paths,
/// and a merge can land an ulp below its predecessor. Single and
/// complete copy exact input values around, so this never fires for
/// them.
/// Asks the kernel to back a large condensed matrix with huge pages.
///
/// The agglomeration engines walk matrix columns with strides near a
/// full row, touching a fresh 4K page per element once n is in the
/// thousands; page-walk overhead then grows with matrix size and
/// distorts the otherwise quadratic runtime. Collapsing the buffer to
/// 2M pages keeps the TLB effective. Purely a hint: any failure (old
/// kernel, fragmentation, non-Linux build) leaves the engine correct
/// on ordinary pages.
#[cfg(target_os = "linux")]
fn advise_huge_pages(buf: &[f64]) {
    const HUGE: usize = 2 << 20;
    if buf.len() * 8 < 4 * HUGE {
        return;
    }
    let page = 4096usize;
    let start = (buf.as_ptr() as usize).next_multiple_of(page);
    let end = (buf.as_ptr() as usize + buf.len() * 8) & !(page - 1);
    if end <= start {
        return;
    }
    // Best effort; MADV_COLLAPSE also converts already-populated pages.
    unsafe {
        let addr = start as *mut libc::c_void;
        libc::madvise(addr, end - start, libc::MADV_HUGEPAGE);
        libc::madvise(addr, end - start, libc::MADV_COLLAPSE);
    }
}

#[cfg(not(target_os = "linux"))]
fn advise_huge_pages(_buf: &[f64]) {}

fn enforce_monotone(steps: &mut [MergeStep]) {
    let mut floor = f64::NEG_INFINITY;
    for s in steps.iter_mut() {
        if s.height < floor {
            s.height = floor;
        } else {
            floor = s.height;
        }
    }
}

/// Rewrite engine output (children holding emission-order labels) into
/// the canonical form: rows stably sorted by height, internal node at
/// sorted step `t` renamed `n + t`, children id-ascending.
///
/// Relies on child-before-parent heights, which [`enforce_monotone`]
/// guarantees: the stable sort then never orders a parent ahead of its
/// children, and the MST engine emits in sorted order already.
fn canonicalize(steps: &mut [MergeStep], n: usize) {
    let m = steps.len();
    let mut perm: Vec<u32> = (0..m as u32).collect();
    perm.sort_unstable_by(|&x, &y| {
        steps[x as usize]
            .height
            .total_cmp(&steps[y as usize].height)
            .then(x.cmp(&y))
    });
    // new_label[e] = canonical id of the cluster emitted at engine step e.
    let mut new_label = vec![0u32; m];
    for (rank, &e) in perm.iter().enumerate() {
        new_label[e as usize] = (n + rank) as u32;
    }
    for s in steps.iter_mut() {
        let map = |l: usize| if l < n { l } else { new_label[l - n] as usize };
        let (a, b) = (map(s.left), map(s.right));
        s.left = a.min(b);
        s.right = a.max(b);
    }
    apply_permutation(steps, &mut perm);
}

/// Reorder so `items[r] = old_items[perm[r]]`, destroying `perm`.
/// Cycle-walking keeps it allocation-free.
fn apply_permutation(items: &mut [MergeStep], perm: &mut [u32]) {
    const DONE: u32 = u32::MAX;
    for start in 0..perm.len() {
        if perm[start] == DONE {
            continue;
        }
        let temp = items[start];
        let mut pos = start;
        loop {
            let src = perm[pos] as usize;
            perm[pos] = DONE;
            if src == start {
                items[pos] = temp;
                break;
            }
            items[pos] = items[src];
            pos = src;
        }
    }
}
