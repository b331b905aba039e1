use std::io;

use thiserror::Error;

/// A type alias for `Result<T, Error>`.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced while loading, transforming, clustering, or evaluating
/// score matrices.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Malformed input file. Carries the line number (1-based) where the
    /// problem was found, when known.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Similarity score outside `[0, 1]` beyond tolerance. The entry is
    /// identified by the image ids of its row and column.
    #[error("score out of range at ({row}, {col}): {value}")]
    ScoreOutOfRange {
        row: String,
        col: String,
        value: f64,
    },

    /// Asymmetry between `(i, j)` and `(j, i)` exceeding the configured
    /// tolerance under the strict symmetrization policy.
    #[error("asymmetric scores at ({row}, {col}): {upper} vs {lower} (tolerance {tolerance})")]
    Asymmetric {
        row: String,
        col: String,
        upper: f64,
        lower: f64,
        tolerance: f64,
    },

    #[error("duplicate image id: {0}")]
    DuplicateImageId(String),

    /// Image id that cannot be represented in a delimited text format.
    #[error("image id {0:?} contains a delimiter or newline")]
    InvalidImageId(String),

    #[error("unknown image id: {0}")]
    UnknownImageId(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Matrices must hold at least two images.
    #[error("too few images: {n} (need at least 2)")]
    TooFewImages { n: usize },

    #[error("subset selected no images")]
    EmptySelection,

    #[error("non-finite distance at ({row}, {col})")]
    NonFiniteDistance { row: String, col: String },

    #[error("cluster count {k} out of range for {n} leaves")]
    KOutOfRange { k: usize, n: usize },

    #[error("no metadata for image: {0}")]
    MissingMetadata(String),

    #[error("empty partition")]
    EmptyPartition,

    #[error("invalid dendrogram: {0}")]
    InvalidDendrogram(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}
