//! Flat partitions cut from a dendrogram.
//!
//! Both cuts work on the canonical height-sorted merge list, so ties
//! resolve in construction order: `cut_k` undoes the last `k - 1`
//! merges, `cut_height` applies every merge at or below the threshold.
//! Cluster labels are assigned by first appearance in leaf order,
//! making partition files deterministic.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::Dendrogram;
use crate::error::{Error, Result};

pub const PARTITION_HEADER: &str = "image_id\tcluster";

/// A flat clustering: every leaf assigned to exactly one of `k`
/// clusters labeled `0..k`, in leaf order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    image_ids: Vec<String>,
    labels: Vec<u32>,
    k: usize,
}

impl Partition {
    /// Build from parallel id/label arrays, relabeling clusters to
    /// first-appearance order and checking label contiguity.
    pub fn new(image_ids: Vec<String>, labels: Vec<u32>) -> Result<Self> {
        if image_ids.is_empty() {
            return Err(Error::EmptyPartition);
        }
        if image_ids.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} image ids but {} labels",
                image_ids.len(),
                labels.len()
            )));
        }
        {
            let mut seen = std::collections::HashSet::with_capacity(image_ids.len());
            for id in &image_ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::DuplicateImageId(id.clone()));
                }
            }
        }
        let max = *labels.iter().max().expect("nonempty") as usize;
        let mut remap: Vec<Option<u32>> = vec![None; max + 1];
        let mut k = 0u32;
        let labels = labels
            .iter()
            .map(|&l| {
                *remap[l as usize].get_or_insert_with(|| {
                    let fresh = k;
                    k += 1;
                    fresh
                })
            })
            .collect();
        Ok(Partition {
            image_ids,
            labels,
            k: k as usize,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of assigned images.
    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    /// Cluster label per image, parallel to [`Self::image_ids`].
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.image_ids
            .iter()
            .map(String::as_str)
            .zip(self.labels.iter().copied())
    }

    /// Images per cluster label.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

/// Cut into exactly `k` clusters by undoing the last `k - 1` merges.
pub fn cut_k(tree: &Dendrogram, k: usize) -> Result<Partition> {
    let n = tree.n_leaves();
    if k < 1 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    Ok(cut_prefix(tree, n - k))
}

/// Cut at a height threshold: clusters are the connected components
/// after applying every merge with height ≤ `h`.
pub fn cut_height(tree: &Dendrogram, h: f64) -> Partition {
    let applied = tree.merges().partition_point(|s| s.height <= h);
    cut_prefix(tree, applied)
}

/// Apply the first `applied` merges and read off components.
fn cut_prefix(tree: &Dendrogram, applied: usize) -> Partition {
    let n = tree.n_leaves();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    let mut node_repr: Vec<u32> = Vec::with_capacity(applied);
    for step in &tree.merges()[..applied] {
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
    }
    // First-appearance labels over leaves.
    let mut label_of_root: Vec<u32> = vec![u32::MAX; n];
    let mut k = 0u32;
    let labels: Vec<u32> = (0..n)
        .map(|leaf| {
            let root = find(&mut parent, leaf as u32) as usize;
            if label_of_root[root] == u32::MAX {
                label_of_root[root] = k;
                k += 1;
            }
            label_of_root[root]
        })
        .collect();
    Partition {
        image_ids: tree.leaf_ids().to_vec(),
        labels,
        k: k as usize,
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let grand = parent[parent[x as usize] as usize];
        parent[x as usize] = grand;
        x = grand;
    }
    x
}

/// Write a partition as tab-separated `image_id`, `cluster` rows in
/// leaf order.
pub fn write_partition<W: Write>(p: &Partition, out: &mut W) -> Result<()> {
    writeln!(out, "{PARTITION_HEADER}")?;
    for (id, label) in p.iter() {
        if id.contains(['\t', '\n', '\r']) {
            return Err(Error::InvalidImageId(id.to_string()));
        }
        writeln!(out, "{id}\t{label}")?;
    }
    Ok(())
}

pub fn save_partition(p: &Partition, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_partition(p, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Parse a partition file; labels are re-checked for contiguity.
pub fn read_partition<R: BufRead>(reader: R) -> Result<Partition> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty partition file".to_string(),
    })?;
    if header?.trim() != PARTITION_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {PARTITION_HEADER:?}"),
        });
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, label) = line.split_once('\t').ok_or(Error::Parse {
            line: lineno + 1,
            message: "expected 2 tab-separated columns".to_string(),
        })?;
        let label: u32 = label.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            message: format!("unparseable cluster label {label:?}"),
        })?;
        ids.push(id.to_string());
        labels.push(label);
    }
    Partition::new(ids, labels)
}

pub fn load_partition(path: &Path) -> Result<Partition> {
    read_partition(BufReader::new(File::open(path)?))
}
