//! Triangular solves needed by the factorizations, blocked by recursive
//! halving down to a direct-substitution base case.

use crate::scalar::Scalar;
use crate::views::{MatrixView, Range};

use super::config::KernelConfig;
use super::gemm::gemm;
use super::EngineError;

const BASE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrsmCase {
    /// Solve `X * tril(tri)^T = alpha * B`.
    RightLowerTransNonunit,
    /// Solve `unit_tril(tri) * X = alpha * B`.
    LeftLowerNotransUnit,
}

/// Overwrites `b` with the solution `X`. Only the lower triangle of `tri`
/// is read (and not its diagonal in the unit case).
pub fn trsm<T: Scalar>(
    case: TrsmCase,
    alpha: T,
    tri: &MatrixView<T>,
    b: &MatrixView<T>,
    cfg: &KernelConfig,
) -> Result<(), EngineError> {
    let n = tri.rows();
    if tri.cols() != n {
        return Err(EngineError::NotSquare(tri.rows(), tri.cols()));
    }
    let conformal = match case {
        TrsmCase::RightLowerTransNonunit => b.cols() == n,
        TrsmCase::LeftLowerNotransUnit => b.rows() == n,
    };
    if !conformal {
        return Err(EngineError::DimensionMismatch(format!(
            "triangle {n}x{n} vs right-hand side {}x{} ({case:?})",
            b.rows(),
            b.cols()
        )));
    }
    if super::alias::views_overlap(tri, b) {
        return Err(EngineError::Aliasing);
    }
    if case == TrsmCase::RightLowerTransNonunit {
        if let Some(i) = (0..n).find(|&i| tri.get(i, i) == T::zero()) {
            return Err(EngineError::ZeroDiagonal(i));
        }
    }
    if b.is_empty() {
        return Ok(());
    }
    if alpha != T::one() {
        for i in 0..b.rows() {
            for j in 0..b.cols() {
                b.set(i, j, alpha * b.get(i, j));
            }
        }
    }
    match case {
        TrsmCase::RightLowerTransNonunit => right_lower_trans(tri, b, cfg),
        TrsmCase::LeftLowerNotransUnit => left_lower_unit(tri, b, cfg),
    }
}

fn right_lower_trans<T: Scalar>(l: &MatrixView<T>, b: &MatrixView<T>, cfg: &KernelConfig) -> Result<(), EngineError> {
    let n = l.rows();
    if n <= BASE {
        for j in 0..n {
            let d = l.get(j, j);
            for i in 0..b.rows() {
                let mut x = b.get(i, j);
                for p in 0..j {
                    x = x - b.get(i, p) * l.get(j, p);
                }
                b.set(i, j, x / d);
            }
        }
        return Ok(());
    }
    let (h1, h2) = (Range::new(0, n / 2), Range::span(n / 2, n));
    let all = Range::new(0, b.rows());
    let (b1, b2) = (b.part(all, h1), b.part(all, h2));
    right_lower_trans(&l.part(h1, h1), &b1, cfg)?;
    gemm(-T::one(), &b1, &l.part(h2, h1).transposed(), T::one(), &b2, cfg, 1)?;
    right_lower_trans(&l.part(h2, h2), &b2, cfg)
}

fn left_lower_unit<T: Scalar>(l: &MatrixView<T>, b: &MatrixView<T>, cfg: &KernelConfig) -> Result<(), EngineError> {
    let n = l.rows();
    if n <= BASE {
        for i in 0..n {
            for j in 0..b.cols() {
                let mut x = b.get(i, j);
                for p in 0..i {
                    x = x - l.get(i, p) * b.get(p, j);
                }
                b.set(i, j, x);
            }
        }
        return Ok(());
    }
    let (h1, h2) = (Range::new(0, n / 2), Range::span(n / 2, n));
    let all = Range::new(0, b.cols());
    let (b1, b2) = (b.part(h1, all), b.part(h2, all));
    left_lower_unit(&l.part(h1, h1), &b1, cfg)?;
    gemm(-T::one(), &l.part(h2, h1), &b1, T::one(), &b2, cfg, 1)?;
    left_lower_unit(&l.part(h2, h2), &b2, cfg)
}
