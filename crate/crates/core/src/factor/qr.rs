use crate::control::{ControlNode, OpKind, Problem, Variant};
use crate::engine::{gemm, KernelConfig};
use crate::scalar::Scalar;
use crate::views::{partition_steps, Layout, MatrixView, Range};

use super::{check_tree, root_config, FactorError};

/// Householder scalars; reflector `j` is `H_j = I - tau[j] v_j v_j^T` with
/// `v_j[j] = 1` implicit and `v_j[j+1..]` stored below the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Reflectors<T> {
    pub tau: Vec<T>,
}

/// In-place Householder QR of an `m x n` matrix with `m >= n`: `R` in the
/// upper triangle, reflectors below it.
pub fn qr_householder<T: Scalar>(a: &MatrixView<T>, tree: &ControlNode) -> Result<Reflectors<T>, FactorError> {
    check_tree(tree, Problem { op: OpKind::Qr, m: a.rows(), n: a.cols(), k: a.cols() })?;
    let mut tau = Vec::with_capacity(a.cols());
    factor(a, tree, root_config::<T>(), &mut tau)?;
    Ok(Reflectors { tau })
}

fn factor<T: Scalar>(a: &MatrixView<T>, node: &ControlNode, cfg: KernelConfig, tau: &mut Vec<T>) -> Result<(), FactorError> {
    let cfg = node.kernel_config(cfg);
    let (m, n) = a.shape();
    let bs = match node.variant {
        Variant::Unblocked(_) => {
            for j in 0..n {
                let t = house(a, j);
                tau.push(t);
                reflect(a, j, t, &a.part(Range::span(j, m), Range::span(j + 1, n)));
            }
            return Ok(());
        }
        Variant::Blocked(_) => node.bs.unwrap_or(1),
    };
    let child = node.child_or_leaf();
    for step in partition_steps(n, bs, 0).map_err(|e| FactorError::Shape(e.to_string()))? {
        let (k, b) = (step.r1.start, step.r1.len);
        let rows = Range::span(k, m);
        let panel = a.part(rows, step.r1);
        let mut local = Vec::with_capacity(b);
        factor(&panel, &child, cfg, &mut local)?;
        if k + b < n {
            let c = a.part(rows, Range::span(k + b, n));
            block_reflect(&panel, &local, &c, &cfg, node.ways)?;
        }
        tau.extend(local);
    }
    Ok(())
}

/// Generates the reflector annihilating `a[j+1.., j]`; leaves beta on the
/// diagonal and `v` below it.
fn house<T: Scalar>(a: &MatrixView<T>, j: usize) -> T {
    let m = a.rows();
    let alpha = a.get(j, j);
    let scale = (j + 1..m).fold(T::zero(), |s, i| s.max(a.get(i, j).abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let ssq = (j + 1..m).fold(T::zero(), |s, i| {
        let x = a.get(i, j) / scale;
        s + x * x
    });
    let xnorm = scale * ssq.sqrt();
    let beta = -alpha.signum() * alpha.hypot(xnorm);
    let inv = T::one() / (alpha - beta);
    for i in j + 1..m {
        a.set(i, j, a.get(i, j) * inv);
    }
    a.set(j, j, beta);
    (beta - alpha) / beta
}

/// `c := (I - tau v v^T) c` with `v` read from column `j` of `a` at rows
/// `j..`; `c` spans exactly those rows.
fn reflect<T: Scalar>(a: &MatrixView<T>, j: usize, tau: T, c: &MatrixView<T>) {
    if tau == T::zero() {
        return;
    }
    for col in 0..c.cols() {
        let mut w = c.get(0, col);
        for i in 1..c.rows() {
            w = w + a.get(j + i, j) * c.get(i, col);
        }
        let w = tau * w;
        c.set(0, col, c.get(0, col) - w);
        for i in 1..c.rows() {
            c.set(i, col, c.get(i, col) - w * a.get(j + i, j));
        }
    }
}

/// Explicit unit-lower `V` of a factored panel.
fn panel_v<T: Scalar>(panel: &MatrixView<T>) -> MatrixView<T> {
    MatrixView::from_fn(panel.rows(), panel.cols(), Layout::ColMajor, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => panel.get(i, j),
        std::cmp::Ordering::Equal => T::one(),
        std::cmp::Ordering::Less => T::zero(),
    })
}

/// Upper triangular `T` with `H_0 H_1 ... H_{b-1} = I - V T V^T`.
fn form_t<T: Scalar>(v: &MatrixView<T>, tau: &[T]) -> MatrixView<T> {
    let b = tau.len();
    let t = MatrixView::<T>::zeros(b, b, Layout::ColMajor);
    for i in 0..b {
        let z: Vec<T> = (0..i)
            .map(|q| (i..v.rows()).fold(T::zero(), |s, r| s + v.get(r, q) * v.get(r, i)))
            .collect();
        for r in 0..i {
            let s = (r..i).fold(T::zero(), |s, q| s + t.get(r, q) * z[q]);
            t.set(r, i, -tau[i] * s);
        }
        t.set(i, i, tau[i]);
    }
    t
}

/// `c := (I - V T V^T)^T c`, the panel's reflectors applied in order.
fn block_reflect<T: Scalar>(
    panel: &MatrixView<T>,
    tau: &[T],
    c: &MatrixView<T>,
    cfg: &KernelConfig,
    ways: usize,
) -> Result<(), FactorError> {
    let v = panel_v(panel);
    let t = form_t(&v, tau);
    let b = tau.len();
    let w = MatrixView::<T>::zeros(b, c.cols(), Layout::ColMajor);
    gemm(T::one(), &v.transposed(), c, T::zero(), &w, cfg, ways)?;
    // w := T^T w, bottom row first so inputs are still unmodified
    for col in 0..w.cols() {
        for i in (0..b).rev() {
            let s = (0..=i).fold(T::zero(), |s, q| s + t.get(q, i) * w.get(q, col));
            w.set(i, col, s);
        }
    }
    gemm(-T::one(), &v, &w, T::one(), c, cfg, ways)?;
    Ok(())
}

/// `c := Q c` where `Q = H_0 H_1 ... H_{n-1}` comes from [`qr_householder`].
pub fn apply_q<T: Scalar>(qr: &MatrixView<T>, refl: &Reflectors<T>, c: &MatrixView<T>) -> Result<(), FactorError> {
    let m = qr.rows();
    if c.rows() != m || refl.tau.len() > qr.cols() {
        return Err(FactorError::Shape(format!(
            "factors {}x{} with {} reflectors vs {}x{}",
            qr.rows(),
            qr.cols(),
            refl.tau.len(),
            c.rows(),
            c.cols()
        )));
    }
    for (j, &t) in refl.tau.iter().enumerate().rev() {
        reflect(qr, j, t, &c.part(Range::span(j, m), Range::new(0, c.cols())));
    }
    Ok(())
}

/// The first `cols` columns of `Q`.
pub fn form_q<T: Scalar>(qr: &MatrixView<T>, refl: &Reflectors<T>, cols: usize) -> Result<MatrixView<T>, FactorError> {
    let m = qr.rows();
    if cols > m {
        return Err(FactorError::Shape(format!("asked for {cols} columns of a {m}x{m} Q")));
    }
    let q = MatrixView::from_fn(m, cols, Layout::ColMajor, |i, j| if i == j { T::one() } else { T::zero() });
    apply_q(qr, refl, &q)?;
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::*;

    fn check(orig: &MatrixView<f64>, tree: &ControlNode) -> (f64, f64) {
        let (m, n) = orig.shape();
        let f = orig.copy_contents(Layout::ColMajor);
        let refl = qr_householder(&f, tree).unwrap();
        let q = form_q(&f, &refl, m).unwrap();
        let r = MatrixView::from_fn(m, n, Layout::RowMajor, |i, j| if i <= j { f.get(i, j) } else { 0.0 });
        let recon = diff_norm(&matmul(&q, &r), orig) / orig.frobenius_norm().max(1.0);
        let orth = diff_norm(&matmul(&q.transposed(), &q), &MatrixView::identity(m, Layout::RowMajor));
        (recon, orth)
    }

    #[test]
    fn three_four_example() {
        let a = MatrixView::<f64>::from_rows(&[&[3.0], &[4.0]]);
        let refl = qr_householder(&a, &ControlNode::unblocked(OpKind::Qr, 1)).unwrap();
        assert!((a.get(0, 0).abs() - 5.0).abs() < 1e-15);
        assert!((refl.tau[0] - 1.6).abs() < 1e-15);
    }

    #[test]
    fn zero_column_gives_zero_tau() {
        let a = MatrixView::from_rows(&[&[2.0, 1.0], &[0.0, 1.0], &[0.0, 1.0]]);
        let refl = qr_householder(&a, &ControlNode::unblocked(OpKind::Qr, 1)).unwrap();
        assert_eq!(refl.tau[0], 0.0);
        assert_eq!(a.get(0, 0), 2.0);
    }

    #[test]
    fn unblocked_and_blocked_trees() {
        let mut s = 12;
        for (m, n) in [(1, 1), (9, 4), (40, 40), (75, 50), (130, 33)] {
            let orig = random(m, n, &mut s);
            for tree in [
                ControlNode::unblocked(OpKind::Qr, 1),
                ControlNode::blocked(OpKind::Qr, 1, 8, None),
                ControlNode::blocked(OpKind::Qr, 1, 16, Some(ControlNode::blocked(OpKind::Qr, 1, 3, None))).with_ways(2),
            ] {
                let (recon, orth) = check(&orig, &tree);
                assert!(recon < 1e-14 * m as f64, "{m}x{n} {}: {recon}", tree.descriptor());
                assert!(orth < 1e-14 * m as f64, "{m}x{n} {}: {orth}", tree.descriptor());
            }
        }
    }

    #[test]
    fn wide_is_rejected() {
        let a = MatrixView::<f64>::zeros(2, 3, Layout::RowMajor);
        assert!(matches!(
            qr_householder(&a, &ControlNode::unblocked(OpKind::Qr, 1)),
            Err(FactorError::InvalidTree(_))
        ));
    }
}
