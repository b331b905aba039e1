/*!
The dendrogram and operations over it: disk format, cuts, exports, and
cophenetic queries.

A dendrogram is the merge history of an agglomerative run in canonical
form (see the linkage module): `n - 1` merges sorted by height, leaves
numbered `0..n`, the merge at step `t` creating node `n + t`. The type
is immutable after construction and all operations here are read-only.

On disk a dendrogram is a tab-separated merge table with columns
`step`, `left`, `right`, `height`, `size`, one row per merge. The table
alone loses the mapping from leaf numbers to image ids, so saving also
writes a sidecar (`<stem>.leaves.tsv`, columns `leaf`, `image_id`) next
to the table, and loading picks the sidecar up automatically when
present. Without it, leaves fall back to their stringified indices.
*/

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linkage::MergeStep;
use crate::score::{condensed_index, condensed_len};

mod cut;
mod export;

pub use cut::{
    cut_height, cut_k, load_partition, read_partition, save_partition, write_partition, Partition,
};
pub use export::{export_dot, export_newick};

pub const MERGE_TABLE_HEADER: &str = "step\tleft\tright\theight\tsize";
pub const LEAVES_HEADER: &str = "leaf\timage_id";

/// An agglomerative merge history in canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    leaf_ids: Vec<String>,
    merges: Vec<MergeStep>,
}

impl Dendrogram {
    /// Build from parts, checking every structural invariant: exactly
    /// n-1 merges, nondecreasing finite heights, every node referenced
    /// as a child exactly once except the root, and sizes that add up.
    pub fn new(leaf_ids: Vec<String>, merges: Vec<MergeStep>) -> Result<Self> {
        let n = leaf_ids.len();
        if n < 2 {
            return Err(Error::TooFewImages { n });
        }
        if merges.len() != n - 1 {
            return Err(Error::InvalidDendrogram(format!(
                "expected {} merges for {} leaves, got {}",
                n - 1,
                n,
                merges.len()
            )));
        }
        let mut used = vec![false; 2 * n - 1];
        let mut prev_height = f64::NEG_INFINITY;
        for (t, step) in merges.iter().enumerate() {
            if !step.height.is_finite() || step.height < 0.0 {
                return Err(Error::InvalidDendrogram(format!(
                    "step {t}: height {} is not finite and nonnegative",
                    step.height
                )));
            }
            if step.height < prev_height {
                return Err(Error::InvalidDendrogram(format!(
                    "step {t}: height {} decreases below {}",
                    step.height, prev_height
                )));
            }
            prev_height = step.height;
            if step.left >= step.right || step.right >= n + t {
                return Err(Error::InvalidDendrogram(format!(
                    "step {t}: children ({}, {}) must be ordered and already defined",
                    step.left, step.right
                )));
            }
            let mut size = 0;
            for child in [step.left, step.right] {
                if used[child] {
                    return Err(Error::InvalidDendrogram(format!(
                        "step {t}: node {child} is already a child of an earlier merge"
                    )));
                }
                used[child] = true;
                size += if child < n { 1 } else { merges[child - n].size };
            }
            if step.size != size {
                return Err(Error::InvalidDendrogram(format!(
                    "step {t}: size {} but children cover {size} leaves",
                    step.size
                )));
            }
        }
        // Every node but the root is consumed; the count argument makes
        // checking the root slot alone sufficient.
        debug_assert!(!used[2 * n - 2]);
        Ok(Dendrogram { leaf_ids, merges })
    }

    /// Wrap engine output. Engines uphold the invariants by
    /// construction; debug builds re-check.
    pub(crate) fn from_linkage(leaf_ids: Vec<String>, merges: Vec<MergeStep>) -> Self {
        if cfg!(debug_assertions) {
            Self::new(leaf_ids, merges).expect("engine produced an invalid dendrogram")
        } else {
            Dendrogram { leaf_ids, merges }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_ids.len()
    }

    pub fn leaf_ids(&self) -> &[String] {
        &self.leaf_ids
    }

    /// Merges in canonical (height-sorted) order.
    pub fn merges(&self) -> &[MergeStep] {
        &self.merges
    }

    /// Height of the final merge.
    pub fn root_height(&self) -> f64 {
        self.merges
            .last()
            .expect("n >= 2 guarantees a merge")
            .height
    }

    pub fn leaf_index(&self, image_id: &str) -> Option<usize> {
        self.leaf_ids.iter().position(|id| id == image_id)
    }

    /// Height of the lowest merge joining `i` and `j`; 0 when `i == j`.
    pub fn cophenetic(&self, i: &str, j: &str) -> Result<f64> {
        let a = self
            .leaf_index(i)
            .ok_or_else(|| Error::UnknownImageId(i.to_string()))?;
        let b = self
            .leaf_index(j)
            .ok_or_else(|| Error::UnknownImageId(j.to_string()))?;
        if a == b {
            return Ok(0.0);
        }
        // Replay merges until a and b share a cluster.
        let n = self.n_leaves();
        let mut parent: Vec<u32> = (0..n as u32).collect();
        let mut node_repr: Vec<u32> = Vec::with_capacity(self.merges.len());
        for step in &self.merges {
            let repr = |node: usize, node_repr: &[u32]| -> u32 {
                if node < n {
                    node as u32
                } else {
                    node_repr[node - n]
                }
            };
            let l = find(&mut parent, repr(step.left, &node_repr));
            let r = find(&mut parent, repr(step.right, &node_repr));
            parent[r as usize] = l;
            node_repr.push(l);
            if find(&mut parent, a as u32) == find(&mut parent, b as u32) {
                return Ok(step.height);
            }
        }
        unreachable!("all leaves meet at the root")
    }

    /// Full cophenetic matrix in condensed form, leaf order. O(n^2).
    pub fn cophenetic_matrix(&self) -> Vec<f64> {
        let n = self.n_leaves();
        let mut coph = vec![0.0f64; condensed_len(n)];
        // members[node] lists the leaves under it; built bottom-up.
        let mut members: Vec<Vec<u32>> = (0..n as u32).map(|i| vec![i]).collect();
        members.reserve(n - 1);
        for step in &self.merges {
            for &u in &members[step.left] {
                for &v in &members[step.right] {
                    let (a, b) = if u < v { (u, v) } else { (v, u) };
                    coph[condensed_index(n, a as usize, b as usize)] = step.height;
                }
            }
            let mut merged = std::mem::take(&mut members[step.left]);
            merged.extend_from_slice(&members[step.right]);
            members[step.right].clear();
            members.push(merged);
        }
        coph
    }

    /// Write the merge table.
    pub fn write_merge_table<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{MERGE_TABLE_HEADER}")?;
        for (t, step) in self.merges.iter().enumerate() {
            writeln!(
                out,
                "{t}\t{}\t{}\t{}\t{}",
                step.left, step.right, step.height, step.size
            )?;
        }
        Ok(())
    }

    /// Write the leaf-number-to-image-id sidecar.
    pub fn write_leaves<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{LEAVES_HEADER}")?;
        for (i, id) in self.leaf_ids.iter().enumerate() {
            if id.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidImageId(id.clone()));
            }
            writeln!(out, "{i}\t{id}")?;
        }
        Ok(())
    }

    /// Save the merge table to `path` and the leaf ids to the
    /// `<stem>.leaves.tsv` sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut table = BufWriter::new(File::create(path)?);
        self.write_merge_table(&mut table)?;
        table.flush()?;
        let mut leaves = BufWriter::new(File::create(leaves_path(path))?);
        self.write_leaves(&mut leaves)?;
        leaves.flush()?;
        Ok(())
    }

    /// Load a merge table, picking up the leaves sidecar when present;
    /// otherwise leaves are named by their indices.
    pub fn load(path: &Path) -> Result<Self> {
        let merges = read_merge_table(BufReader::new(File::open(path)?))?;
        let n = merges.len() + 1;
        let sidecar = leaves_path(path);
        let leaf_ids = if sidecar.exists() {
            read_leaves(BufReader::new(File::open(&sidecar)?), n)?
        } else {
            (0..n).map(|i| i.to_string()).collect()
        };
        Dendrogram::new(leaf_ids, merges)
    }
}

/// Sidecar path for a merge table: `out/merges.tsv` ->
/// `out/merges.leaves.tsv`.
pub fn leaves_path(table_path: &Path) -> PathBuf {
    table_path.with_extension("leaves.tsv")
}

/// Parse a merge table; structural validation happens when the caller
/// assembles the [`Dendrogram`].
pub fn read_merge_table<R: BufRead>(reader: R) -> Result<Vec<MergeStep>> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty merge table".to_string(),
    })?;
    if header?.trim() != MERGE_TABLE_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {MERGE_TABLE_HEADER:?}"),
        });
    }
    let mut merges = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |field: &str, what: &str| -> Result<usize> {
            field.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("unparseable {what} {field:?}"),
            })
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 5 columns, got {}", fields.len()),
            });
        }
        let step = parse(fields[0], "step")?;
        if step != merges.len() {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("step {step} out of order, expected {}", merges.len()),
            });
        }
        let height: f64 = fields[3].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            message: format!("unparseable height {:?}", fields[3]),
        })?;
        merges.push(MergeStep {
            left: parse(fields[1], "left child")?,
            right: parse(fields[2], "right child")?,
            height,
            size: parse(fields[4], "size")?,
        });
    }
    Ok(merges)
}

fn read_leaves<R: BufRead>(reader: R, n: usize) -> Result<Vec<String>> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty leaves file".to_string(),
    })?;
    if header?.trim() != LEAVES_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {LEAVES_HEADER:?}"),
        });
    }
    let mut ids = Vec::with_capacity(n);
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (leaf, id) = line.split_once('\t').ok_or(Error::Parse {
            line: lineno + 1,
            message: "expected 2 tab-separated columns".to_string(),
        })?;
        if leaf.parse::<usize>() != Ok(ids.len()) {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("leaf {leaf:?} out of order, expected {}", ids.len()),
            });
        }
        ids.push(id.to_string());
    }
    if ids.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "leaves file has {} ids but the merge table implies {n} leaves",
            ids.len()
        )));
    }
    Ok(ids)
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let grand = parent[parent[x as usize] as usize];
        parent[x as usize] = grand;
        x = grand;
    }
    x
}
