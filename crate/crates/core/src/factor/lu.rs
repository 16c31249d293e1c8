use crate::control::{ControlNode, OpKind, Problem, Variant};
use crate::engine::{gemm, trsm, EngineError, KernelConfig, TrsmCase};
use crate::scalar::Scalar;
use crate::views::{partition_steps, MatrixView, Range};

use super::{check_tree, root_config, FactorError, PivotVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// In-place LU with partial pivoting, `P A = L U`, for any `m x n`.
///
/// Ties in the pivot search go to the smallest row index. An exactly zero
/// pivot column does not stop the factorization; it completes and then
/// reports the first such column together with the pivots.
pub fn lu_partial<T: Scalar>(a: &MatrixView<T>, tree: &ControlNode) -> Result<PivotVector, FactorError> {
    check_tree(tree, Problem { op: OpKind::Lu, m: a.rows(), n: a.cols(), k: a.cols() })?;
    let mut piv = PivotVector::default();
    let zero = factor(a, tree, root_config::<T>(), &mut piv)?;
    match zero {
        Some(column) => Err(FactorError::Singular { column, pivots: piv }),
        None => Ok(piv),
    }
}

fn factor<T: Scalar>(
    a: &MatrixView<T>,
    node: &ControlNode,
    cfg: KernelConfig,
    piv: &mut PivotVector,
) -> Result<Option<usize>, FactorError> {
    let cfg = node.kernel_config(cfg);
    let (m, n) = a.shape();
    let kmax = m.min(n);
    let bs = match node.variant {
        Variant::Unblocked(_) => return Ok(unblocked(a, piv)),
        Variant::Blocked(_) => node.bs.unwrap_or(1),
    };
    let child = node.child_or_leaf();
    let one = T::one();
    let mut first_zero = None;
    for step in partition_steps(kmax, bs, 0).map_err(|e| FactorError::Shape(e.to_string()))? {
        let r1 = step.r1;
        let (k, b) = (r1.start, r1.len);
        let below = Range::span(k, m);
        let mut local = PivotVector::default();
        let z = factor(&a.part(below, r1), &child, cfg, &mut local)?;
        if first_zero.is_none() {
            first_zero = z.map(|z| k + z);
        }
        let left = a.part(Range::new(0, m), Range::new(0, k));
        let right = a.part(Range::new(0, m), Range::span(k + b, n));
        for (i, &p) in local.as_slice().iter().enumerate() {
            let (r, g) = (k + i, k + p);
            piv.push(g);
            if r != g {
                left.swap_rows(r, g);
                right.swap_rows(r, g);
            }
        }
        if k + b < n {
            let u12 = a.part(r1, Range::span(k + b, n));
            trsm(TrsmCase::LeftLowerNotransUnit, one, &a.part(r1, r1), &u12, &cfg)?;
            if k + b < m {
                let rest = Range::span(k + b, m);
                gemm(-one, &a.part(rest, r1), &u12, one, &a.part(rest, Range::span(k + b, n)), &cfg, node.ways)?;
            }
        }
    }
    Ok(first_zero)
}

fn unblocked<T: Scalar>(a: &MatrixView<T>, piv: &mut PivotVector) -> Option<usize> {
    let (m, n) = a.shape();
    let mut first_zero = None;
    for k in 0..m.min(n) {
        let mut p = k;
        let mut best = a.get(k, k).abs();
        for i in k + 1..m {
            let v = a.get(i, k).abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        piv.push(p);
        if p != k {
            a.swap_rows(k, p);
        }
        let d = a.get(k, k);
        if d == T::zero() {
            first_zero.get_or_insert(k);
            continue;
        }
        for i in k + 1..m {
            a.set(i, k, a.get(i, k) / d);
        }
        for j in k + 1..n {
            let u = a.get(k, j);
            for i in k + 1..m {
                a.set(i, j, a.get(i, j) - a.get(i, k) * u);
            }
        }
    }
    first_zero
}

/// Applies the interchanges to the rows of `a`; `Backward` undoes `Forward`.
pub fn apply_pivots<T: Scalar>(a: &MatrixView<T>, piv: &PivotVector, dir: Direction) -> Result<(), FactorError> {
    if let Some(&p) = piv.as_slice().iter().max() {
        if p >= a.rows() {
            return Err(FactorError::Shape(format!("pivot {p} out of range for {} rows", a.rows())));
        }
    }
    let swap = |k: usize, p: usize| {
        if k != p {
            a.swap_rows(k, p)
        }
    };
    match dir {
        Direction::Forward => piv.as_slice().iter().enumerate().for_each(|(k, &p)| swap(k, p)),
        Direction::Backward => piv.as_slice().iter().enumerate().rev().for_each(|(k, &p)| swap(k, p)),
    }
    Ok(())
}

/// Solves `A X = B` in place in `b` from the output of [`lu_partial`] on a
/// square `A`.
pub fn lu_solve<T: Scalar>(lu: &MatrixView<T>, piv: &PivotVector, b: &MatrixView<T>) -> Result<(), FactorError> {
    let n = lu.rows();
    if lu.cols() != n || b.rows() != n || piv.len() != n {
        return Err(FactorError::Shape(format!(
            "factors {}x{}, {} pivots, right-hand side {}x{}",
            lu.rows(),
            lu.cols(),
            piv.len(),
            b.rows(),
            b.cols()
        )));
    }
    if let Some(index) = (0..n).find(|&i| lu.get(i, i) == T::zero()) {
        return Err(FactorError::SingularSolve { index });
    }
    apply_pivots(b, piv, Direction::Forward)?;
    trsm(TrsmCase::LeftLowerNotransUnit, T::one(), lu, b, &root_config::<T>()).map_err(|e| match e {
        EngineError::Aliasing => FactorError::Shape("right-hand side aliases the factors".into()),
        e => e.into(),
    })?;
    for j in 0..b.cols() {
        for i in (0..n).rev() {
            let mut x = b.get(i, j);
            for p in i + 1..n {
                x = x - lu.get(i, p) * b.get(p, j);
            }
            b.set(i, j, x / lu.get(i, i));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::*;
    use crate::views::Layout;

    fn reconstruct(f: &MatrixView<f64>) -> MatrixView<f64> {
        let (m, n) = f.shape();
        let k = m.min(n);
        let l = MatrixView::from_fn(m, k, Layout::RowMajor, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => f.get(i, j),
            std::cmp::Ordering::Equal => 1.0,
            _ => 0.0,
        });
        let u = MatrixView::from_fn(k, n, Layout::RowMajor, |i, j| if i <= j { f.get(i, j) } else { 0.0 });
        matmul(&l, &u)
    }

    #[test]
    fn small_example() {
        let a = MatrixView::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let piv = lu_partial(&a, &ControlNode::unblocked(OpKind::Lu, 1)).unwrap();
        assert_eq!(piv.as_slice(), &[1, 1]);
        assert_eq!(a.to_row_major_vec(), vec![3.0, 4.0, 1.0 / 3.0, 2.0 - 4.0 / 3.0]);
    }

    #[test]
    fn zero_leading_entry_example() {
        let a = MatrixView::from_rows(&[&[0.0, 1.0], &[2.0, 3.0]]);
        let f = a.copy_contents(Layout::RowMajor);
        let piv = lu_partial(&f, &ControlNode::unblocked(OpKind::Lu, 1)).unwrap();
        assert_eq!(piv.as_slice(), &[1, 1]);
        assert_eq!(f.to_row_major_vec(), vec![2.0, 3.0, 0.0, 1.0]);
        let b = MatrixView::from_rows(&[&[1.0], &[1.0]]);
        lu_solve(&f, &piv, &b).unwrap();
        assert_eq!(b.to_row_major_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn single_swap_forward_backward() {
        let a = MatrixView::from_rows(&[&[1.0], &[2.0]]);
        let piv = PivotVector::new(vec![1, 1], 2).unwrap();
        apply_pivots(&a, &piv, Direction::Forward).unwrap();
        assert_eq!(a.to_row_major_vec(), vec![2.0, 1.0]);
        apply_pivots(&a, &piv, Direction::Backward).unwrap();
        assert_eq!(a.to_row_major_vec(), vec![1.0, 2.0]);
        apply_pivots(&a, &PivotVector::identity(2), Direction::Forward).unwrap();
        assert_eq!(a.to_row_major_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn ties_pick_smallest_row() {
        let a = MatrixView::from_rows(&[&[1.0, 0.0], &[-1.0, 1.0]]);
        let piv = lu_partial(&a, &ControlNode::unblocked(OpKind::Lu, 1)).unwrap();
        assert_eq!(piv.as_slice(), &[0, 1]);
    }

    #[test]
    fn singular_completes_and_reports() {
        let a = MatrixView::from_rows(&[&[0.0, 1.0, 2.0], &[0.0, 3.0, 4.0], &[0.0, 5.0, 7.0]]);
        match lu_partial(&a, &ControlNode::blocked(OpKind::Lu, 1, 2, None)) {
            Err(FactorError::Singular { column, pivots }) => {
                assert_eq!(column, 0);
                assert_eq!(pivots.len(), 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn blocked_matches_reconstruction_on_rectangles() {
        let mut s = 8;
        for (m, n) in [(1, 1), (7, 7), (40, 25), (25, 40), (64, 64), (90, 70)] {
            let orig = random(m, n, &mut s);
            for tree in [
                ControlNode::unblocked(OpKind::Lu, 1),
                ControlNode::blocked(OpKind::Lu, 1, 8, None),
                ControlNode::blocked(OpKind::Lu, 1, 32, Some(ControlNode::blocked(OpKind::Lu, 1, 4, None))).with_ways(3),
            ] {
                let f = orig.copy_contents(Layout::ColMajor);
                let piv = lu_partial(&f, &tree).unwrap();
                let pa = orig.copy_contents(Layout::RowMajor);
                apply_pivots(&pa, &piv, Direction::Forward).unwrap();
                let err = diff_norm(&pa, &reconstruct(&f)) / orig.frobenius_norm();
                assert!(err < 1e-14, "{m}x{n} {}: {err}", tree.descriptor());
                apply_pivots(&pa, &piv, Direction::Backward).unwrap();
                assert!(pa.bit_eq(&orig));
            }
        }
    }

    #[test]
    fn blocked_and_unblocked_pivots_agree() {
        let mut s = 21;
        let orig = random(50, 50, &mut s);
        let a = orig.copy_contents(Layout::ColMajor);
        let b = orig.copy_contents(Layout::ColMajor);
        let pa = lu_partial(&a, &ControlNode::unblocked(OpKind::Lu, 1)).unwrap();
        let pb = lu_partial(&b, &ControlNode::blocked(OpKind::Lu, 1, 16, None)).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let mut s = 4;
        let a = random(30, 30, &mut s);
        let x = random(30, 3, &mut s);
        let b = matmul(&a, &x).copy_contents(Layout::ColMajor);
        let f = a.copy_contents(Layout::ColMajor);
        let piv = lu_partial(&f, &ControlNode::blocked(OpKind::Lu, 1, 8, None)).unwrap();
        lu_solve(&f, &piv, &b).unwrap();
        assert!(diff_norm(&b, &x) < 1e-10);

        let z = MatrixView::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let piv = lu_partial(&z, &ControlNode::unblocked(OpKind::Lu, 1)).unwrap_err();
        let FactorError::Singular { pivots, .. } = piv else { panic!() };
        let rhs = MatrixView::from_rows(&[&[1.0], &[2.0]]);
        assert_eq!(lu_solve(&z, &pivots, &rhs), Err(FactorError::SingularSolve { index: 1 }));
    }
}
