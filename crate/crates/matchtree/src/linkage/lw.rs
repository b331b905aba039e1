//! Lance-Williams distance updates, shared by every clustering engine.
//!
//! Keeping the formulas in one place guarantees the production engines
//! and the reference oracle disagree only through merge order, never
//! through arithmetic.

use super::LinkageMethod;

/// Distance from the merger of clusters `a` and `b` to another cluster
/// `x`, given the three pre-merge distances and the cluster sizes.
///
/// Single and complete linkage ignore `d_ab` and the sizes. Ward uses
/// the minimum-variance coefficients applied directly to the supplied
/// dissimilarities (the Ward.D convention): with N = n_a + n_b + n_x,
///
///   d(ab,x) = ((n_a + n_x) d_ax + (n_b + n_x) d_bx - n_x d_ab) / N
#[inline]
pub(super) fn update(
    method: LinkageMethod,
    d_ax: f64,
    d_bx: f64,
    d_ab: f64,
    n_a: u32,
    n_b: u32,
    n_x: u32,
) -> f64 {
    match method {
        LinkageMethod::Single => d_ax.min(d_bx),
        LinkageMethod::Complete => d_ax.max(d_bx),
        LinkageMethod::Ward => {
            let (na, nb, nx) = (f64::from(n_a), f64::from(n_b), f64::from(n_x));
            ((na + nx) * d_ax + (nb + nx) * d_bx - nx * d_ab) / (na + nb + nx)
        }
    }
}
