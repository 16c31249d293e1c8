//! The mr x nr micro-kernel.
//!
//! The k loop always runs in ascending order and multiply and add are kept
//! separate, so a tile's result depends only on its packed inputs.

use crate::scalar::Scalar;
use crate::views::MatrixView;

use super::config::MAX_MICRO_TILE;
use super::pack::PackedPanel;

pub(crate) const TILE_CAP: usize = MAX_MICRO_TILE * MAX_MICRO_TILE;

#[inline(always)]
fn rank_k_fixed<A: Scalar, const MR: usize, const NR: usize>(k: usize, a: &[A], b: &[A], ab: &mut [A]) {
    let mut acc = [[A::zero(); NR]; MR];
    for (ap, bp) in a[..k * MR].chunks_exact(MR).zip(b[..k * NR].chunks_exact(NR)) {
        for i in 0..MR {
            let ai = ap[i];
            for j in 0..NR {
                acc[i][j] = acc[i][j] + ai * bp[j];
            }
        }
    }
    for i in 0..MR {
        ab[i * NR..(i + 1) * NR].copy_from_slice(&acc[i]);
    }
}

fn rank_k_generic<A: Scalar>(k: usize, mr: usize, nr: usize, a: &[A], b: &[A], ab: &mut [A]) {
    let ab = &mut ab[..mr * nr];
    ab.fill(A::zero());
    for (ap, bp) in a[..k * mr].chunks_exact(mr).zip(b[..k * nr].chunks_exact(nr)) {
        for i in 0..mr {
            let ai = ap[i];
            let row = &mut ab[i * nr..(i + 1) * nr];
            for j in 0..nr {
                row[j] = row[j] + ai * bp[j];
            }
        }
    }
}

/// `ab[i * nr + j] = sum_p a[p * mr + i] * b[p * nr + j]` over ascending p.
#[inline]
pub(crate) fn rank_k<A: Scalar>(k: usize, mr: usize, nr: usize, a: &[A], b: &[A], ab: &mut [A]) {
    match (mr, nr) {
        (8, 6) => rank_k_fixed::<A, 8, 6>(k, a, b, ab),
        (4, 4) => rank_k_fixed::<A, 4, 4>(k, a, b, ab),
        (8, 4) => rank_k_fixed::<A, 8, 4>(k, a, b, ab),
        (4, 8) => rank_k_fixed::<A, 4, 8>(k, a, b, ab),
        _ => rank_k_generic(k, mr, nr, a, b, ab),
    }
}

/// Combines a computed tile with the existing C value.
#[inline(always)]
pub(crate) fn update<T: Scalar, A: Scalar>(c: T, ab: A, alpha: A, beta: A) -> T {
    if beta == A::zero() {
        (alpha * ab).cast()
    } else {
        (beta * c.cast::<A>() + alpha * ab).cast()
    }
}

/// `c := beta * c + alpha * a * b` for one micro-tile.
///
/// `a` and `b` are single micro-panels (`n_panels == 1`); `c` may be smaller
/// than `mr x nr` at matrix edges and may have any strides.
pub fn microkernel<T: Scalar, A: Scalar>(
    alpha: A,
    a: &PackedPanel<A>,
    b: &PackedPanel<A>,
    beta: A,
    c: &MatrixView<T>,
) {
    let (mr, nr) = (a.panel_dim, b.panel_dim);
    debug_assert_eq!(a.k, b.k);
    debug_assert!(c.rows() <= mr && c.cols() <= nr);
    debug_assert!(mr <= MAX_MICRO_TILE && nr <= MAX_MICRO_TILE);
    let mut ab = [A::zero(); TILE_CAP];
    rank_k(a.k, mr, nr, a.panel(0), b.panel(0), &mut ab);
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            c.set(i, j, update(c.get(i, j), ab[i * nr + j], alpha, beta));
        }
    }
}
