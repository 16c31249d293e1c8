//! Packing of A and B blocks into micro-panel order.
//!
//! A blocks are stored as consecutive `mr x k` micro-panels, each k-major
//! (`buf[p * mr + i]`). B blocks are consecutive `k x nr` micro-panels
//! (`buf[p * nr + j]`). Rows or columns past the source edge are zero.

use crate::scalar::Scalar;
use crate::views::MatrixView;

use super::config::{KernelConfig, MAX_MICRO_TILE};
use super::operand::Operand;
use super::workspace::PackBuf;
use super::EngineError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Linear recombination applied while packing.
#[derive(Clone, Debug, PartialEq)]
pub enum PackTransform<T> {
    Identity,
    /// Packs `T * src` where `T` is skew-symmetric tridiagonal with
    /// subdiagonal `t` (`T[i+1][i] = t[i] = -T[i][i+1]`), combining at most
    /// two adjacent source rows per packed row.
    TridiagSkewRight(Vec<T>),
}

/// Contiguous micro-panels ready for the micro-kernel.
#[derive(Debug)]
pub struct PackedPanel<A> {
    pub buffer: PackBuf<A>,
    pub panel_dim: usize,
    pub k: usize,
    pub n_panels: usize,
    pub side: Side,
}

impl<A> PackedPanel<A> {
    /// Micro-panel `p`.
    pub fn panel(&self, p: usize) -> &[A] {
        let len = self.panel_dim * self.k;
        &self.buffer[p * len..(p + 1) * len]
    }
}

impl<A> std::fmt::Debug for PackBuf<A>
where
    A: std::fmt::Debug,
{
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

/// Packs rows `[i0, i0+mb)` x cols `[p0, p0+kb)` of `a` into `buf`.
pub(crate) fn pack_a_block<T: Scalar, A: Scalar>(
    a: &Operand<'_, T>,
    i0: usize,
    mb: usize,
    p0: usize,
    kb: usize,
    mr: usize,
    buf: &mut [A],
) {
    let mut row_offs = [0isize; MAX_MICRO_TILE];
    for (panel, chunk) in buf[..mb.div_ceil(mr) * mr * kb].chunks_exact_mut(mr * kb).enumerate() {
        let r0 = i0 + panel * mr;
        let rows = mr.min(i0 + mb - r0);
        a.rows.offsets_into(r0, rows, &mut row_offs);
        for p in 0..kb {
            let co = a.cols.offset(p0 + p);
            let dst = &mut chunk[p * mr..(p + 1) * mr];
            for ii in 0..rows {
                // SAFETY: (r0+ii, p0+p) lies inside the operand.
                dst[ii] = unsafe { a.load(row_offs[ii] + co) }.cast();
            }
            for d in &mut dst[rows..] {
                *d = A::zero();
            }
        }
    }
}

/// Packs rows `[p0, p0+kb)` x cols `[j0, j0+nb)` of `b` into `buf`, optionally
/// forming `T * b` on the fly. `t` is indexed by global row of `b`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pack_b_block<T: Scalar, A: Scalar>(
    b: &Operand<'_, T>,
    p0: usize,
    kb: usize,
    j0: usize,
    nb: usize,
    nr: usize,
    tridiag: Option<&[T]>,
    buf: &mut [A],
) {
    let k_total = b.m;
    let mut col_offs = [0isize; MAX_MICRO_TILE];
    for (panel, chunk) in buf[..nb.div_ceil(nr) * nr * kb].chunks_exact_mut(nr * kb).enumerate() {
        let c0 = j0 + panel * nr;
        let cols = nr.min(j0 + nb - c0);
        b.cols.offsets_into(c0, cols, &mut col_offs);
        for p in 0..kb {
            let g = p0 + p;
            let dst = &mut chunk[p * nr..(p + 1) * nr];
            match tridiag {
                None => {
                    let ro = b.rows.offset(g);
                    for jj in 0..cols {
                        // SAFETY: (g, c0+jj) lies inside the operand.
                        dst[jj] = unsafe { b.load(ro + col_offs[jj]) }.cast();
                    }
                }
                Some(t) => {
                    // row g of T*b = t[g-1] * b[g-1, :] - t[g] * b[g+1, :]
                    let up = (g > 0).then(|| (t[g - 1].cast::<A>(), b.rows.offset(g - 1)));
                    let down = (g + 1 < k_total).then(|| (t[g].cast::<A>(), b.rows.offset(g + 1)));
                    for jj in 0..cols {
                        let mut w = A::zero();
                        if let Some((tu, ro)) = up {
                            // SAFETY: row g-1 exists.
                            w = w + tu * unsafe { b.load(ro + col_offs[jj]) }.cast();
                        }
                        if let Some((td, ro)) = down {
                            // SAFETY: row g+1 exists.
                            w = w - td * unsafe { b.load(ro + col_offs[jj]) }.cast();
                        }
                        dst[jj] = w;
                    }
                }
            }
            for d in &mut dst[cols..] {
                *d = A::zero();
            }
        }
    }
}

/// Packs a whole source block: `side = A` packs an `m x k` block into
/// `mr`-row micro-panels, `side = B` packs a `k x n` block into `nr`-column
/// micro-panels.
pub fn pack_panel<T: Scalar, A: Scalar>(
    src: &MatrixView<T>,
    side: Side,
    cfg: &KernelConfig,
    transform: &PackTransform<T>,
) -> Result<PackedPanel<A>, EngineError> {
    cfg.validate()?;
    let op = Operand::from_view(src)?;
    match side {
        Side::A => {
            if !matches!(transform, PackTransform::Identity) {
                return Err(EngineError::InvalidArgument(
                    "tridiagonal pack transform applies to side B only".into(),
                ));
            }
            let (m, k) = src.shape();
            let n_panels = m.div_ceil(cfg.mr);
            let mut buffer = PackBuf::new(n_panels * cfg.mr * k);
            pack_a_block(&op, 0, m, 0, k, cfg.mr, &mut buffer);
            Ok(PackedPanel {
                buffer,
                panel_dim: cfg.mr,
                k,
                n_panels,
                side,
            })
        }
        Side::B => {
            let (k, n) = src.shape();
            let tridiag = match transform {
                PackTransform::Identity => None,
                PackTransform::TridiagSkewRight(t) => {
                    let expected = k.saturating_sub(1);
                    if t.len() != expected {
                        return Err(EngineError::TransformLength {
                            expected,
                            got: t.len(),
                        });
                    }
                    Some(t.as_slice())
                }
            };
            let n_panels = n.div_ceil(cfg.nr);
            let mut buffer = PackBuf::new(n_panels * cfg.nr * k);
            pack_b_block(&op, 0, k, 0, n, cfg.nr, tridiag, &mut buffer);
            Ok(PackedPanel {
                buffer,
                panel_dim: cfg.nr,
                k,
                n_panels,
                side,
            })
        }
    }
}
