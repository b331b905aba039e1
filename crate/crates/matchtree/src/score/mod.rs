/*!
Similarity and distance matrices over a set of images.

Both matrix types store the upper triangle of a symmetric all-vs-all
matrix in *condensed* form: `n*(n-1)/2` values laid out row-major as
`(0,1), (0,2), ..., (0,n-1), (1,2), ...`. The diagonal is never stored;
self-similarity plays no part in clustering.

[`SimilarityMatrix`] holds raw matcher output (scores in `[0, 1]`, higher
means more alike, stored at the 32-bit precision of the binary file
format). [`DistanceMatrix`] holds dissimilarities derived from it by
subtracting every score from the maximum score, so the most similar pair
sits at distance zero.
*/

pub mod io;

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Tolerance for scores slightly outside `[0, 1]`: values within it are
/// clamped, values beyond it are rejected.
pub const SCORE_TOLERANCE: f64 = 1e-9;

/// Number of condensed entries for `n` observations.
#[inline]
pub fn condensed_len(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Index of pair `(i, j)` with `i < j` in a condensed matrix over `n`
/// observations.
#[inline]
pub fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (n - 1) - i * (i + 1) / 2 + j - 1
}

fn check_ids(ids: &[String]) -> Result<()> {
    if ids.len() < 2 {
        return Err(Error::TooFewImages { n: ids.len() });
    }
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateImageId(id.clone()));
        }
    }
    Ok(())
}

fn subset_indices<F: FnMut(&str) -> bool>(ids: &[String], mut keep: F) -> Result<Vec<usize>> {
    let kept: Vec<usize> = (0..ids.len()).filter(|&i| keep(&ids[i])).collect();
    match kept.len() {
        0 => Err(Error::EmptySelection),
        1 => Err(Error::TooFewImages { n: 1 }),
        _ => Ok(kept),
    }
}

fn subset_condensed<T: Copy>(values: &[T], n: usize, kept: &[usize]) -> Vec<T> {
    let m = kept.len();
    let mut out = Vec::with_capacity(condensed_len(m));
    for a in 0..m {
        for b in a + 1..m {
            out.push(values[condensed_index(n, kept[a], kept[b])]);
        }
    }
    out
}

/// Symmetric all-vs-all similarity scores over `n` images.
///
/// Scores are unitless values in `[0, 1]`; higher means greater
/// similarity. Entries are kept as `f32`, matching the precision of the
/// binary file format, so a write/reload round trip is bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    ids: Vec<String>,
    scores: Vec<f32>,
}

impl SimilarityMatrix {
    /// Build from image ids and condensed scores, validating id
    /// uniqueness, the condensed length, and the score range (values
    /// within [`SCORE_TOLERANCE`] of the range are clamped).
    pub fn from_condensed(ids: Vec<String>, mut scores: Vec<f32>) -> Result<Self> {
        check_ids(&ids)?;
        let n = ids.len();
        if scores.len() != condensed_len(n) {
            return Err(Error::DimensionMismatch(format!(
                "expected {} condensed scores for {} images, got {}",
                condensed_len(n),
                n,
                scores.len()
            )));
        }
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                let s = f64::from(scores[idx]);
                if !(-SCORE_TOLERANCE..=1.0 + SCORE_TOLERANCE).contains(&s) {
                    return Err(Error::ScoreOutOfRange {
                        row: ids[i].clone(),
                        col: ids[j].clone(),
                        value: s,
                    });
                }
                scores[idx] = scores[idx].clamp(0.0, 1.0);
                idx += 1;
            }
        }
        Ok(SimilarityMatrix { ids, scores })
    }

    /// Number of images.
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Image ids in matrix order.
    pub fn image_ids(&self) -> &[String] {
        &self.ids
    }

    /// Score of the pair `(i, j)`, `i != j`, by position.
    pub fn score(&self, i: usize, j: usize) -> f32 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.scores[condensed_index(self.n(), a, b)]
    }

    /// The condensed upper triangle.
    pub fn condensed(&self) -> &[f32] {
        &self.scores
    }

    /// Restrict the matrix to the images whose id satisfies `keep`,
    /// preserving id order and pairwise values.
    pub fn subset<F: FnMut(&str) -> bool>(&self, keep: F) -> Result<Self> {
        let kept = subset_indices(&self.ids, keep)?;
        let ids = kept.iter().map(|&i| self.ids[i].clone()).collect();
        let scores = subset_condensed(&self.scores, self.n(), &kept);
        Ok(SimilarityMatrix { ids, scores })
    }

    /// Transform into a distance matrix by subtracting every score from
    /// the maximum score. The most similar pair ends up at distance zero
    /// and the ordering of pairs is reversed.
    pub fn to_distance(&self) -> DistanceMatrix {
        let max = self
            .scores
            .iter()
            .copied()
            .fold(f32::NEG_INFINITY, f32::max);
        let max = f64::from(max);
        let d = self.scores.iter().map(|&s| max - f64::from(s)).collect();
        DistanceMatrix {
            ids: self.ids.clone(),
            d,
        }
    }
}

/// Symmetric pairwise dissimilarities over `n` images, condensed storage.
///
/// Entries are finite and non-negative. Produced by
/// [`SimilarityMatrix::to_distance`] or built directly from parts.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from image ids and condensed dissimilarities, validating id
    /// uniqueness, the condensed length, finiteness, and non-negativity.
    pub fn from_condensed(ids: Vec<String>, d: Vec<f64>) -> Result<Self> {
        check_ids(&ids)?;
        let n = ids.len();
        if d.len() != condensed_len(n) {
            return Err(Error::DimensionMismatch(format!(
                "expected {} condensed distances for {} images, got {}",
                condensed_len(n),
                n,
                d.len()
            )));
        }
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                let v = d[idx];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::NonFiniteDistance {
                        row: ids[i].clone(),
                        col: ids[j].clone(),
                    });
                }
                idx += 1;
            }
        }
        Ok(DistanceMatrix { ids, d })
    }

    /// Number of images.
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Image ids in matrix order.
    pub fn image_ids(&self) -> &[String] {
        &self.ids
    }

    /// Distance of the pair `(i, j)`, `i != j`, by position.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.d[condensed_index(self.n(), a, b)]
    }

    /// The condensed upper triangle.
    pub fn condensed(&self) -> &[f64] {
        &self.d
    }

    /// Restrict the matrix to the images whose id satisfies `keep`,
    /// preserving id order and pairwise values.
    pub fn subset<F: FnMut(&str) -> bool>(&self, keep: F) -> Result<Self> {
        let kept = subset_indices(&self.ids, keep)?;
        let ids = kept.iter().map(|&i| self.ids[i].clone()).collect();
        let d = subset_condensed(&self.d, self.n(), &kept);
        Ok(DistanceMatrix { ids, d })
    }

    /// Tear the matrix apart into ids and condensed values. Clustering
    /// consumes the matrix through this to reuse its storage in place.
    pub(crate) fn into_parts(self) -> (Vec<String>, Vec<f64>) {
        (self.ids, self.d)
    }
}
