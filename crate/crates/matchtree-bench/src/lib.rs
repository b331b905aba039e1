//! Input builders shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use matchtree::score::condensed_len;
use matchtree::DistanceMatrix;

/// A reproducible random distance matrix over `n` objects with
/// continuous entries in (0.01, 1), almost surely untied.
pub fn random_distances(n: usize, seed: u64) -> DistanceMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = (0..n).map(|i| format!("img{i:05}")).collect();
    let d = (0..condensed_len(n))
        .map(|_| rng.random_range(0.01..1.0))
        .collect();
    DistanceMatrix::from_condensed(ids, d).expect("valid condensed matrix")
}
