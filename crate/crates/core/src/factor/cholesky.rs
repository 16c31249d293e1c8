use crate::control::{ControlNode, OpKind, Problem, Variant};
use crate::engine::{gemm, syrk_lower, trsm, KernelConfig, TrsmCase};
use crate::scalar::Scalar;
use crate::views::{partition_steps, MatrixView};

use super::{check_tree, root_config, FactorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Uplo {
    Lower,
    Upper,
}

/// In-place Cholesky. With `Lower`, the lower triangle becomes `L` with
/// `A = L L^T`; with `Upper`, the upper triangle becomes `U = L^T`, computed
/// by running the lower algorithm on the transposed view. The other triangle
/// is neither read nor written.
pub fn cholesky<T: Scalar>(a: &MatrixView<T>, uplo: Uplo, tree: &ControlNode) -> Result<(), FactorError> {
    check_tree(tree, Problem { op: OpKind::Cholesky, m: a.rows(), n: a.cols(), k: a.cols() })?;
    let l = match uplo {
        Uplo::Lower => a.clone(),
        Uplo::Upper => a.transposed(),
    };
    factor(&l, tree, root_config::<T>(), 0)
}

fn factor<T: Scalar>(a: &MatrixView<T>, node: &ControlNode, cfg: KernelConfig, base: usize) -> Result<(), FactorError> {
    let cfg = node.kernel_config(cfg);
    let bs = match node.variant {
        Variant::Unblocked(v) => return unblocked(a, v, base),
        Variant::Blocked(_) => node.bs.unwrap_or(1),
    };
    let child = node.child_or_leaf();
    let (one, w) = (T::one(), node.ways);
    for step in partition_steps(a.rows(), bs, 0).map_err(|e| FactorError::Shape(e.to_string()))? {
        let (r0, r1, r2) = (step.r0, step.r1, step.r2);
        let a10 = a.part(r1, r0);
        let a11 = a.part(r1, r1);
        let a20 = a.part(r2, r0);
        let a21 = a.part(r2, r1);
        let sub = base + r1.start;
        match node.variant.number() {
            1 => {
                trsm(TrsmCase::RightLowerTransNonunit, one, &a.part(r0, r0), &a10, &cfg)?;
                syrk_lower(-one, &a10, one, &a11, &cfg, w)?;
                factor(&a11, &child, cfg, sub)?;
            }
            2 => {
                syrk_lower(-one, &a10, one, &a11, &cfg, w)?;
                factor(&a11, &child, cfg, sub)?;
                gemm(-one, &a20, &a10.transposed(), one, &a21, &cfg, w)?;
                trsm(TrsmCase::RightLowerTransNonunit, one, &a11, &a21, &cfg)?;
            }
            _ => {
                factor(&a11, &child, cfg, sub)?;
                trsm(TrsmCase::RightLowerTransNonunit, one, &a11, &a21, &cfg)?;
                syrk_lower(-one, &a21, one, &a.part(r2, r2), &cfg, w)?;
            }
        }
    }
    Ok(())
}

fn pivot<T: Scalar>(d: T, index: usize) -> Result<T, FactorError> {
    // also rejects NaN
    if d > T::zero() {
        Ok(d.sqrt())
    } else {
        Err(FactorError::NotPositiveDefinite { index })
    }
}

fn unblocked<T: Scalar>(a: &MatrixView<T>, variant: u8, base: usize) -> Result<(), FactorError> {
    let n = a.rows();
    match variant {
        // bordered: row j of L from the leading factor, then the diagonal
        1 => {
            for j in 0..n {
                for p in 0..j {
                    let mut x = a.get(j, p);
                    for q in 0..p {
                        x = x - a.get(j, q) * a.get(p, q);
                    }
                    a.set(j, p, x / a.get(p, p));
                }
                let mut d = a.get(j, j);
                for q in 0..j {
                    d = d - a.get(j, q) * a.get(j, q);
                }
                a.set(j, j, pivot(d, base + j)?);
            }
        }
        // left-looking: column j from the columns to its left
        2 => {
            for j in 0..n {
                let mut d = a.get(j, j);
                for q in 0..j {
                    d = d - a.get(j, q) * a.get(j, q);
                }
                let d = pivot(d, base + j)?;
                a.set(j, j, d);
                for i in j + 1..n {
                    let mut x = a.get(i, j);
                    for q in 0..j {
                        x = x - a.get(i, q) * a.get(j, q);
                    }
                    a.set(i, j, x / d);
                }
            }
        }
        // right-looking
        _ => {
            for j in 0..n {
                let d = pivot(a.get(j, j), base + j)?;
                a.set(j, j, d);
                for i in j + 1..n {
                    a.set(i, j, a.get(i, j) / d);
                }
                for jj in j + 1..n {
                    let ljj = a.get(jj, j);
                    for i in jj..n {
                        a.set(i, jj, a.get(i, jj) - a.get(i, j) * ljj);
                    }
                }
            }
        }
    }
    Ok(())
}
