//! Pivoted `P X P^T = L T L^T` for skew-symmetric `X`, and the Pfaffian.
//!
//! Only the strict lower triangle of `X` is read or written. On return,
//! `x[j+1, j]` holds `t[j]` and `x[i, j]` for `i >= j + 2` holds
//! `L[i, j+1]`. Column 0 of `L` is `e_0`, and `L` is unit lower triangular.

use crate::control::{ControlNode, OpKind, Problem, Variant};
use crate::engine::{sandwich_skew, KernelConfig};
use crate::scalar::Scalar;
use crate::views::{partition_steps, Layout, MatrixView, Range};

use super::{check_tree, root_config, FactorError, PivotVector};

/// Skew-symmetric tridiagonal `T` given by its subdiagonal,
/// `T[i+1, i] = t[i] = -T[i, i+1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagSkew<T> {
    pub n: usize,
    pub t: Vec<T>,
}

impl<T: Scalar> TridiagSkew<T> {
    pub fn to_dense(&self) -> MatrixView<T> {
        let d = MatrixView::zeros(self.n, self.n, Layout::RowMajor);
        for (i, &t) in self.t.iter().enumerate() {
            d.set(i + 1, i, t);
            d.set(i, i + 1, -t);
        }
        d
    }

    /// `pf(T)`, the product of the superdiagonal entries at even positions.
    pub fn pfaffian(&self) -> T {
        if self.n % 2 == 1 {
            return T::zero();
        }
        self.t.iter().step_by(2).fold(T::one(), |p, &t| p * -t)
    }
}

/// Factors the skew-symmetric `x` in place; see the module docs for the
/// storage convention. `piv[0] = 0` and `piv[k+1]` is the row exchanged
/// with `k + 1` at step `k`.
pub fn ltlt_pivoted<T: Scalar>(
    x: &MatrixView<T>,
    tree: &ControlNode,
) -> Result<(PivotVector, TridiagSkew<T>), FactorError> {
    check_tree(tree, Problem { op: OpKind::Ltlt, m: x.rows(), n: x.cols(), k: x.cols() })?;
    let n = x.rows();
    let mut piv = vec![0; n];
    let mut t = vec![T::zero(); n.saturating_sub(1)];
    let cfg = tree.kernel_config(root_config::<T>());
    match tree.variant {
        Variant::Unblocked(_) => unblocked(x, &mut piv, &mut t)?,
        Variant::Blocked(_) => blocked(x, tree.bs.unwrap_or(1), &cfg, tree.ways, &mut piv, &mut t)?,
    }
    Ok((PivotVector(piv), TridiagSkew { n, t }))
}

/// Dense unit lower `L` from the factored storage.
pub fn ltlt_unit_lower<T: Scalar>(x: &MatrixView<T>) -> MatrixView<T> {
    let n = x.rows();
    MatrixView::from_fn(n, n, Layout::ColMajor, |i, j| {
        if i == j {
            T::one()
        } else if j >= 1 && i > j {
            x.get(i, j - 1)
        } else {
            T::zero()
        }
    })
}

/// Pfaffian of a skew-symmetric matrix; destroys `x`. Odd order gives an
/// exact zero without factoring.
pub fn pfaffian<T: Scalar>(x: &MatrixView<T>, tree: &ControlNode) -> Result<T, FactorError> {
    let n = x.rows();
    if x.cols() != n {
        return Err(FactorError::Shape(format!("pfaffian needs a square matrix, got {}x{}", n, x.cols())));
    }
    let deviation = skew_deviation(x);
    if deviation > n as f64 * x.dtype().eps() * x.max_abs() {
        return Err(FactorError::NotSkew { deviation });
    }
    if n % 2 == 1 {
        return Ok(T::zero());
    }
    let (piv, t) = ltlt_pivoted(x, tree)?;
    let pf = t.pfaffian();
    Ok(if piv.sign() < 0 { -pf } else { pf })
}

fn skew_deviation<T: Scalar>(x: &MatrixView<T>) -> f64 {
    let mut d = 0.0f64;
    for i in 0..x.rows() {
        for j in 0..=i {
            d = d.max((x.get(i, j) + x.get(j, i)).to_f64().abs());
        }
    }
    d
}

/// Symmetric exchange of indices `p < r` on lower storage.
fn sym_swap<T: Scalar>(x: &MatrixView<T>, p: usize, r: usize) {
    if p == r {
        return;
    }
    let n = x.rows();
    for j in 0..p {
        let v = x.get(p, j);
        x.set(p, j, x.get(r, j));
        x.set(r, j, v);
    }
    for i in p + 1..r {
        let v = x.get(i, p);
        x.set(i, p, -x.get(r, i));
        x.set(r, i, -v);
    }
    x.set(r, p, -x.get(r, p));
    for i in r + 1..n {
        let v = x.get(i, p);
        x.set(i, p, x.get(i, r));
        x.set(i, r, v);
    }
}

fn argmax_below<T: Scalar>(x: &MatrixView<T>, k: usize) -> usize {
    let mut r = k + 1;
    let mut best = x.get(r, k).abs();
    for i in k + 2..x.rows() {
        let v = x.get(i, k).abs();
        if v > best {
            best = v;
            r = i;
        }
    }
    r
}

/// Scales column `k` below `k + 1` into multipliers; returns `t[k]`.
fn eliminate<T: Scalar>(x: &MatrixView<T>, k: usize) -> T {
    let t = x.get(k + 1, k);
    if t != T::zero() {
        for i in k + 2..x.rows() {
            x.set(i, k, x.get(i, k) / t);
        }
    }
    t
}

fn unblocked<T: Scalar>(x: &MatrixView<T>, piv: &mut [usize], t: &mut [T]) -> Result<(), FactorError> {
    let n = x.rows();
    for step in partition_steps(n, 1, 1).map_err(|e| FactorError::Shape(e.to_string()))? {
        let k = step.r1.start;
        let Some(next) = step.r1b.filter(|r| !r.is_empty()) else { break };
        let r = argmax_below(x, k);
        piv[next.start] = r;
        sym_swap(x, next.start, r);
        t[k] = eliminate(x, k);
        // trailing rank-2 update, strict lower part
        let rest = Range::span(next.end(), n);
        for j in rest.iter() {
            let (mj, yj) = (x.get(j, k), x.get(j, k + 1));
            for i in j + 1..n {
                let v = x.get(i, j) + x.get(i, k) * yj - x.get(i, k + 1) * mj;
                x.set(i, j, v);
            }
        }
    }
    Ok(())
}

fn blocked<T: Scalar>(
    x: &MatrixView<T>,
    bs: usize,
    cfg: &KernelConfig,
    ways: usize,
    piv: &mut [usize],
    t: &mut [T],
) -> Result<(), FactorError> {
    let n = x.rows();
    let zero = T::zero();
    for step in partition_steps(n, bs, 1).map_err(|e| FactorError::Shape(e.to_string()))? {
        let (s0, b) = (step.r1.start, step.r1.len);
        // m[:, j] multipliers of step s0+j; y[:, j] updated column s0+j+1
        let m = MatrixView::<T>::zeros(n, b, Layout::ColMajor);
        let y = MatrixView::<T>::zeros(n, b, Layout::ColMajor);
        let lazy_column = |k: usize, filled: usize| {
            for i in k + 1..n {
                let mut v = x.get(i, k);
                for q in 0..filled {
                    v = v + m.get(i, q) * y.get(k, q) - y.get(i, q) * m.get(k, q);
                }
                x.set(i, k, v);
            }
        };
        for j in 0..b {
            let k = s0 + j;
            if k + 1 >= n {
                break;
            }
            if j >= 2 {
                lazy_column(k, j - 1);
            }
            let r = argmax_below(x, k);
            piv[k + 1] = r;
            sym_swap(x, k + 1, r);
            if r != k + 1 {
                m.swap_rows(k + 1, r);
                y.swap_rows(k + 1, r);
            }
            if j >= 1 {
                for i in k + 1..n {
                    y.set(i, j - 1, x.get(i, k));
                }
            }
            t[k] = eliminate(x, k);
            for i in k + 2..n {
                m.set(i, j, x.get(i, k));
            }
        }
        let Some(la) = step.r1b.filter(|r| !r.is_empty()) else { continue };
        let k = la.start;
        if k + 1 >= n {
            continue;
        }
        // bring the lookahead column up to date; it closes the last term
        lazy_column(k, b - 1);
        for i in k + 1..n {
            y.set(i, b - 1, x.get(i, k));
        }
        let rest = Range::span(k + 1, n);
        let a = MatrixView::<T>::zeros(rest.len, b + 1, Layout::ColMajor);
        for (ii, i) in rest.iter().enumerate() {
            for q in 0..b {
                a.set(ii, q, m.get(i, q));
            }
            a.set(ii, b, y.get(i, b - 1));
        }
        let mut tau: Vec<T> = (1..b).map(|q| t[s0 + q]).collect();
        tau.push(T::one());
        let c = x.part(rest, rest);
        sandwich_skew(&c, &a, &tau, cfg, ways)?;
        let tol = 1e3 * n as f64 * x.dtype().eps() * c.max_abs().max(1.0);
        for i in 0..rest.len {
            debug_assert!(c.get(i, i).to_f64().abs() <= tol, "diagonal drift at {}", k + 1 + i);
            c.set(i, i, zero);
        }
    }
    Ok(())
}
