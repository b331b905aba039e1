/*!
Hierarchical clustering of face-recognition similarity matrices.

A pairwise similarity matrix is loaded (or synthesized), converted to
dissimilarity space, clustered agglomeratively (single, complete, or
Ward linkage), and the resulting dendrogram is cut into flat partitions
whose demographic composition can then be evaluated against per-image
metadata.

The crate is organized around that pipeline:

- [`score`]: similarity and distance matrices in condensed upper-triangle
  form, plus their disk formats.
- [`meta`]: per-image demographic labels.
- [`linkage`]: the agglomerative engines and the merge history they emit.
- [`dendro`]: dendrogram structure, cuts, and tree exports.
- [`evaluate`]: cluster purity and composition reports.
- [`synth`]: synthetic score-matrix generation with controllable
  demographic structure.
*/

pub mod dendro;
pub mod error;
pub mod evaluate;
pub mod linkage;
pub mod meta;
pub mod score;
pub mod synth;

pub use error::{Error, Result};
pub use linkage::{LinkageMethod, WardVariant};
pub use score::io::{MatrixFormat, Symmetrize};
pub use score::{DistanceMatrix, SimilarityMatrix};
