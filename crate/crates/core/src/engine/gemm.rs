//! Five loops around the micro-kernel.
//!
//! ```text
//! for jc in 0..n step nc          (5th loop)  B block kc x nc packed once
//!   for pc in 0..k step kc        (4th loop)
//!     for ic in 0..m step mc      (3rd loop)  split across the worker team
//!       for jr in 0..nc step nr   (2nd loop)
//!         for ir in 0..mc step mr (1st loop)  micro-kernel
//! ```
//!
//! Workers own whole `mc` row blocks of C, so every micro-tile has one
//! writer and the k blocks are folded into it in ascending order; results
//! do not depend on the number of workers.

use std::thread;

use crate::scalar::{DType, Scalar};
use crate::views::MatrixView;

use super::alias::views_overlap;
use super::config::KernelConfig;
use super::kernel::{rank_k, update, TILE_CAP};
use super::operand::{Operand, OutOperand};
use super::pack::{pack_a_block, pack_b_block};
use super::workspace::PackBuf;
use super::EngineError;

/// Which part of C an update may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Region {
    Full,
    /// Entries with row >= col.
    Lower,
}

pub(crate) struct GemmArgs<'a, T> {
    pub a: Operand<'a, T>,
    pub b: Operand<'a, T>,
    pub c: OutOperand<'a, T>,
    /// Forms `T * b` during packing of B (see `PackTransform`).
    pub tridiag: Option<&'a [T]>,
    pub region: Region,
}

/// Validated entry point for all level-3 products. Dispatches on the
/// accumulation type.
pub(crate) fn run<T: Scalar>(
    alpha: T,
    beta: T,
    args: &GemmArgs<'_, T>,
    cfg: &KernelConfig,
    ways: usize,
) -> Result<(), EngineError> {
    cfg.validate()?;
    if cfg.dtype != T::DTYPE {
        return Err(EngineError::InvalidConfig(format!(
            "config for {} used with {} operands",
            cfg.dtype,
            T::DTYPE
        )));
    }
    if args.a.m != args.c.m || args.b.n != args.c.n || args.a.n != args.b.m {
        return Err(EngineError::DimensionMismatch(format!(
            "({}x{}) * ({}x{}) -> ({}x{})",
            args.a.m, args.a.n, args.b.m, args.b.n, args.c.m, args.c.n
        )));
    }
    match (T::DTYPE, cfg.acc_dtype) {
        (d, acc) if d == acc => five_loops::<T, T>(alpha.cast(), beta.cast(), args, cfg, ways),
        (DType::F32, DType::F64) => five_loops::<T, f64>(alpha.cast(), beta.cast(), args, cfg, ways),
        (d, acc) => {
            return Err(EngineError::InvalidConfig(format!(
                "unsupported accumulation {acc} for {d}"
            )))
        }
    }
    Ok(())
}

fn scale_region<T: Scalar>(c: &OutOperand<'_, T>, beta: T, region: Region) {
    if beta == T::one() {
        return;
    }
    for j in 0..c.n {
        let i0 = if region == Region::Lower { j } else { 0 };
        for i in i0..c.m {
            // SAFETY: (i, j) is inside C and no other thread is running.
            unsafe {
                let p = c.elem(i, j);
                *p = if beta == T::zero() { T::zero() } else { beta * *p };
            }
        }
    }
}

fn five_loops<T: Scalar, A: Scalar>(alpha: A, beta: A, args: &GemmArgs<'_, T>, cfg: &KernelConfig, ways: usize) {
    let (m, n, k) = (args.c.m, args.c.n, args.a.n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 || alpha == A::zero() {
        scale_region(&args.c, beta.cast::<T>(), args.region);
        return;
    }
    let (mr, nr) = (cfg.mr, cfg.nr);
    let mc = cfg.mc.min(m.next_multiple_of(mr));
    let kc = cfg.kc.min(k);
    let nc = cfg.nc.min(n.next_multiple_of(nr));
    let ways = ways.clamp(1, m.div_ceil(mc));

    let mut a_bufs: Vec<PackBuf<A>> = (0..ways).map(|_| PackBuf::new(mc * kc)).collect();
    let mut b_buf: PackBuf<A> = PackBuf::new(kc * nc);

    for jc in (0..n).step_by(nc) {
        let nb = nc.min(n - jc);
        let blocks: Vec<usize> = (0..m)
            .step_by(mc)
            .filter(|&ic| args.region == Region::Full || ic + mc.min(m - ic) > jc)
            .collect();
        for pc in (0..k).step_by(kc) {
            let kb = kc.min(k - pc);
            pack_b_block(&args.b, pc, kb, jc, nb, nr, args.tridiag, &mut b_buf);
            let beta_blk = if pc == 0 { beta } else { A::one() };
            let blk = Block {
                pc,
                kb,
                jc,
                nb,
                alpha,
                beta: beta_blk,
                b: &b_buf,
            };
            if ways == 1 {
                for &ic in &blocks {
                    macro_kernel(args, cfg, &blk, ic, mc.min(m - ic), &mut a_bufs[0]);
                }
            } else {
                thread::scope(|s| {
                    for (w, a_buf) in a_bufs.iter_mut().enumerate() {
                        let (blocks, blk) = (&blocks, &blk);
                        s.spawn(move || {
                            for &ic in blocks.iter().skip(w).step_by(ways) {
                                macro_kernel(args, cfg, blk, ic, mc.min(m - ic), a_buf);
                            }
                        });
                    }
                });
            }
        }
    }
}

struct Block<'a, A> {
    pc: usize,
    kb: usize,
    jc: usize,
    nb: usize,
    alpha: A,
    beta: A,
    b: &'a [A],
}

fn macro_kernel<T: Scalar, A: Scalar>(
    args: &GemmArgs<'_, T>,
    cfg: &KernelConfig,
    blk: &Block<'_, A>,
    ic: usize,
    mb: usize,
    a_buf: &mut [A],
) {
    let (mr, nr, kb) = (cfg.mr, cfg.nr, blk.kb);
    pack_a_block(&args.a, ic, mb, blk.pc, kb, mr, a_buf);
    let mut ab = [A::zero(); TILE_CAP];
    for jr in (0..blk.nb).step_by(nr) {
        let nbj = nr.min(blk.nb - jr);
        let bp = &blk.b[(jr / nr) * nr * kb..(jr / nr + 1) * nr * kb];
        let col0 = blk.jc + jr;
        for ir in (0..mb).step_by(mr) {
            let mbi = mr.min(mb - ir);
            let row0 = ic + ir;
            let masked = match args.region {
                Region::Full => false,
                Region::Lower => {
                    if row0 + mbi <= col0 {
                        continue;
                    }
                    row0 < col0 + nbj - 1
                }
            };
            let ap = &a_buf[(ir / mr) * mr * kb..(ir / mr + 1) * mr * kb];
            rank_k(kb, mr, nr, ap, bp, &mut ab);
            for i in 0..mbi {
                for j in 0..nbj {
                    if masked && row0 + i < col0 + j {
                        continue;
                    }
                    // SAFETY: the tile lies inside C and belongs to this worker.
                    unsafe {
                        let p = args.c.elem(row0 + i, col0 + j);
                        *p = update(*p, ab[i * nr + j], blk.alpha, blk.beta);
                    }
                }
            }
        }
    }
}

fn check_alias<T>(c: &MatrixView<T>, inputs: &[&MatrixView<T>]) -> Result<(), EngineError> {
    if inputs.iter().any(|x| views_overlap(c, x)) {
        Err(EngineError::Aliasing)
    } else {
        Ok(())
    }
}

/// `c := beta * c + alpha * a * b`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    alpha: T,
    a: &MatrixView<T>,
    b: &MatrixView<T>,
    beta: T,
    c: &MatrixView<T>,
    cfg: &KernelConfig,
    ways: usize,
) -> Result<(), EngineError> {
    check_alias(c, &[a, b])?;
    let args = GemmArgs {
        a: Operand::from_view(a)?,
        b: Operand::from_view(b)?,
        c: OutOperand::from_view(c)?,
        tridiag: None,
        region: Region::Full,
    };
    run(alpha, beta, &args, cfg, ways)
}

/// GEMMT: like [`gemm`] but only entries with `i >= j` of the square `c`
/// are updated; the strict upper triangle is never read or written.
#[allow(clippy::too_many_arguments)]
pub fn gemmt_lower<T: Scalar>(
    alpha: T,
    a: &MatrixView<T>,
    b: &MatrixView<T>,
    beta: T,
    c: &MatrixView<T>,
    cfg: &KernelConfig,
    ways: usize,
) -> Result<(), EngineError> {
    if c.rows() != c.cols() {
        return Err(EngineError::NotSquare(c.rows(), c.cols()));
    }
    check_alias(c, &[a, b])?;
    let args = GemmArgs {
        a: Operand::from_view(a)?,
        b: Operand::from_view(b)?,
        c: OutOperand::from_view(c)?,
        tridiag: None,
        region: Region::Lower,
    };
    run(alpha, beta, &args, cfg, ways)
}

/// Lower triangle of `c := beta * c + alpha * a * a^T`.
pub fn syrk_lower<T: Scalar>(
    alpha: T,
    a: &MatrixView<T>,
    beta: T,
    c: &MatrixView<T>,
    cfg: &KernelConfig,
    ways: usize,
) -> Result<(), EngineError> {
    gemmt_lower(alpha, a, &a.transposed(), beta, c, cfg, ways)
}

/// Lower triangle of `c := c - a * T * a^T` with `T` skew-symmetric
/// tridiagonal (subdiagonal `t`). `T * a^T` is formed inside the packing of
/// B, so no `k x n` intermediate exists.
pub fn sandwich_skew<T: Scalar>(
    c: &MatrixView<T>,
    a: &MatrixView<T>,
    t: &[T],
    cfg: &KernelConfig,
    ways: usize,
) -> Result<(), EngineError> {
    if c.rows() != c.cols() {
        return Err(EngineError::NotSquare(c.rows(), c.cols()));
    }
    let expected = a.cols().saturating_sub(1);
    if t.len() != expected {
        return Err(EngineError::TransformLength {
            expected,
            got: t.len(),
        });
    }
    check_alias(c, &[a])?;
    let a_op = Operand::from_view(a)?;
    let args = GemmArgs {
        a: a_op,
        b: a_op.transposed(),
        c: OutOperand::from_view(c)?,
        tridiag: Some(t),
        region: Region::Lower,
    };
    run(-T::one(), T::one(), &args, cfg, ways)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::workspace::track_allocations;
    use crate::views::{Layout, Range};
    use proptest::prelude::*;

    fn small_cfg() -> KernelConfig {
        KernelConfig {
            mr: 4,
            nr: 4,
            mc: 8,
            kc: 5,
            nc: 8,
            dtype: DType::F64,
            acc_dtype: DType::F64,
        }
    }

    fn naive(alpha: f64, a: &MatrixView<f64>, b: &MatrixView<f64>, beta: f64, c: &MatrixView<f64>) {
        for i in 0..c.rows() {
            for j in 0..c.cols() {
                let s: f64 = (0..a.cols()).map(|p| a.get(i, p) * b.get(p, j)).sum();
                let old = if beta == 0.0 { 0.0 } else { beta * c.get(i, j) };
                c.set(i, j, old + alpha * s);
            }
        }
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn rand_mat(m: usize, n: usize, layout: Layout, seed: &mut u64) -> MatrixView<f64> {
        MatrixView::from_fn(m, n, layout, |_, _| lcg(seed))
    }

    #[test]
    fn two_by_two_example() {
        let a = MatrixView::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = MatrixView::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]);
        let c = MatrixView::<f64>::zeros(2, 2, Layout::RowMajor);
        gemm(1.0, &a, &b, 0.0, &c, &KernelConfig::default_for(DType::F64), 1).unwrap();
        assert_eq!(c.to_row_major_vec(), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn identity_and_empty_cases() {
        let mut s = 7;
        let a = rand_mat(5, 5, Layout::ColMajor, &mut s);
        let id = MatrixView::<f64>::identity(5, Layout::RowMajor);
        let c = MatrixView::<f64>::zeros(5, 5, Layout::RowMajor);
        gemm(1.0, &a, &id, 0.0, &c, &small_cfg(), 1).unwrap();
        assert!(c.bit_eq(&a));

        let c = rand_mat(3, 4, Layout::RowMajor, &mut s);
        let before = c.copy_contents(Layout::RowMajor);
        let a0 = MatrixView::<f64>::zeros(3, 0, Layout::RowMajor);
        let b0 = MatrixView::<f64>::zeros(0, 4, Layout::RowMajor);
        gemm(1.0, &a0, &b0, 1.0, &c, &small_cfg(), 1).unwrap();
        assert!(c.bit_eq(&before));
        gemm(1.0, &a0, &b0, 0.0, &c, &small_cfg(), 1).unwrap();
        assert_eq!(c.max_abs(), 0.0);

        let e = MatrixView::<f64>::zeros(0, 4, Layout::RowMajor);
        let a = MatrixView::<f64>::zeros(0, 3, Layout::RowMajor);
        let b = rand_mat(3, 4, Layout::RowMajor, &mut s);
        gemm(1.0, &a, &b, 1.0, &e, &small_cfg(), 2).unwrap();
    }

    #[test]
    fn errors() {
        let a = MatrixView::<f64>::zeros(2, 3, Layout::RowMajor);
        let b = MatrixView::<f64>::zeros(2, 3, Layout::RowMajor);
        let c = MatrixView::<f64>::zeros(2, 3, Layout::RowMajor);
        assert!(matches!(
            gemm(1.0, &a, &b, 0.0, &c, &small_cfg(), 1),
            Err(EngineError::DimensionMismatch(_))
        ));
        let big = MatrixView::<f64>::zeros(4, 4, Layout::RowMajor);
        let x = big.part(Range::new(0, 2), Range::new(0, 2));
        let y = big.part(Range::new(1, 2), Range::new(1, 2));
        assert!(matches!(
            gemm(1.0, &x, &x, 0.0, &y, &small_cfg(), 1),
            Err(EngineError::Aliasing)
        ));
        let z = big.part(Range::new(2, 2), Range::new(2, 2));
        gemm(1.0, &x, &x, 0.0, &z, &small_cfg(), 1).unwrap();
        let rect = MatrixView::<f64>::zeros(2, 3, Layout::RowMajor);
        assert!(matches!(
            gemmt_lower(1.0, &a, &b.transposed(), 0.0, &rect, &small_cfg(), 1),
            Err(EngineError::NotSquare(2, 3))
        ));
        let f32cfg = KernelConfig::default_for(DType::F32);
        assert!(gemm(1.0, &x, &x, 0.0, &z, &f32cfg, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_naive(m in 0usize..20, n in 0usize..20, k in 0usize..20, seed in any::<u64>(), ta: bool, tb: bool, beta_zero: bool) {
            let mut s = seed;
            let a = if ta { rand_mat(k, m, Layout::RowMajor, &mut s).transposed() } else { rand_mat(m, k, Layout::RowMajor, &mut s) };
            let b = if tb { rand_mat(n, k, Layout::ColMajor, &mut s).transposed() } else { rand_mat(k, n, Layout::ColMajor, &mut s) };
            let c = rand_mat(m, n, Layout::RowMajor, &mut s);
            let r = c.copy_contents(Layout::RowMajor);
            let beta = if beta_zero { 0.0 } else { 0.75 };
            gemm(1.5, &a, &b, beta, &c, &small_cfg(), 1 + (seed % 3) as usize).unwrap();
            naive(1.5, &a, &b, beta, &r);
            let tol = 4.0 * (k.max(1) as f64) * f64::EPSILON * 4.0;
            for i in 0..m { for j in 0..n {
                prop_assert!((c.get(i, j) - r.get(i, j)).abs() <= tol, "({i},{j})");
            }}
        }
    }

    #[test]
    fn gemmt_examples() {
        let cfg = small_cfg();
        let a = MatrixView::from_rows(&[&[1.0], &[2.0]]);
        let b = MatrixView::from_rows(&[&[3.0, 4.0]]);
        let c = MatrixView::from_rows(&[&[0.0, 12345.0], &[0.0, 0.0]]);
        gemmt_lower(1.0, &a, &b, 1.0, &c, &cfg, 1).unwrap();
        assert_eq!(c.to_row_major_vec(), vec![3.0, 12345.0, 6.0, 8.0]);

        let z = MatrixView::<f64>::zeros(2, 1, Layout::RowMajor);
        let c = MatrixView::from_rows(&[&[2.0, 12345.0], &[4.0, 6.0]]);
        gemmt_lower(1.0, &z, &b, 0.5, &c, &cfg, 1).unwrap();
        assert_eq!(c.to_row_major_vec(), vec![1.0, 12345.0, 2.0, 3.0]);
    }

    #[test]
    fn gemmt_leaves_strict_upper_bitwise() {
        let mut s = 3;
        for n in [1, 5, 9, 17] {
            let a = rand_mat(n, 7, Layout::RowMajor, &mut s);
            let b = rand_mat(7, n, Layout::RowMajor, &mut s);
            let c = rand_mat(n, n, Layout::ColMajor, &mut s);
            for j in 1..n {
                for i in 0..j {
                    c.set(i, j, f64::from_bits(0x7ff8_dead_beef_0000 + (i * n + j) as u64));
                }
            }
            let before = c.copy_contents(Layout::RowMajor);
            let full = c.copy_contents(Layout::RowMajor);
            gemmt_lower(-1.0, &a, &b, 1.0, &c, &small_cfg(), 2).unwrap();
            gemm(-1.0, &a, &b, 1.0, &full, &small_cfg(), 1).unwrap();
            for i in 0..n {
                for j in 0..n {
                    if i < j {
                        assert_eq!(c.get(i, j).to_bits(), before.get(i, j).to_bits());
                    } else {
                        assert_eq!(c.get(i, j).to_bits(), full.get(i, j).to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn syrk_example() {
        let a = MatrixView::from_rows(&[&[1.0], &[2.0]]);
        let c = MatrixView::<f64>::identity(2, Layout::RowMajor);
        syrk_lower(-1.0, &a, 1.0, &c, &small_cfg(), 1).unwrap();
        assert_eq!((c.get(0, 0), c.get(1, 0), c.get(1, 1)), (0.0, -2.0, -3.0));
        assert_eq!(c.get(0, 1), 0.0);
    }

    #[test]
    fn sandwich_examples() {
        let cfg = small_cfg();
        let a = MatrixView::<f64>::identity(2, Layout::RowMajor);
        let c = MatrixView::<f64>::zeros(2, 2, Layout::RowMajor);
        sandwich_skew(&c, &a, &[2.0], &cfg, 1).unwrap();
        assert_eq!((c.get(0, 0), c.get(1, 0), c.get(1, 1)), (0.0, -2.0, 0.0));

        let mut s = 11;
        let a = rand_mat(5, 4, Layout::RowMajor, &mut s);
        let c = rand_mat(5, 5, Layout::RowMajor, &mut s);
        let before = c.copy_contents(Layout::RowMajor);
        sandwich_skew(&c, &a, &[0.0; 3], &cfg, 1).unwrap();
        assert!(c.bit_eq(&before));
        assert!(matches!(
            sandwich_skew(&c, &a, &[1.0; 2], &cfg, 1),
            Err(EngineError::TransformLength { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn sandwich_workspace_is_two_pack_buffers() {
        let mut s = 5;
        let cfg = small_cfg();
        let a = rand_mat(40, 30, Layout::RowMajor, &mut s);
        let c = rand_mat(40, 40, Layout::RowMajor, &mut s);
        let t: Vec<f64> = (0..29).map(|_| lcg(&mut s)).collect();
        let (r, stats) = track_allocations(|| sandwich_skew(&c, &a, &t, &cfg, 1));
        r.unwrap();
        assert!(stats.peak_elements <= cfg.mc * cfg.kc + cfg.kc * cfg.nc);
        assert_eq!(stats.allocations, 2);
    }
}
