//! Brute-force references for tests, the `check` command and the sweep's
//! error column.
//!
//! Everything here depends only on [`crate::views`] and accumulates in f64.
//! These routines are meant to be slow and obviously correct.

use std::collections::HashMap;

use crate::scalar::Scalar;
use crate::views::MatrixView;

/// `c := beta * c + alpha * a * b`, ascending i, j, k, f64 accumulation.
/// `beta == 0` overwrites `c` without reading it.
pub fn gemm_naive<T: Scalar>(alpha: f64, a: &MatrixView<T>, b: &MatrixView<T>, beta: f64, c: &MatrixView<T>) {
    assert_eq!(a.cols(), b.rows(), "inner dimensions differ");
    assert_eq!((c.rows(), c.cols()), (a.rows(), b.cols()), "output shape");
    for i in 0..c.rows() {
        for j in 0..c.cols() {
            let mut s = 0.0f64;
            for p in 0..a.cols() {
                s += a.get(i, p).to_f64() * b.get(p, j).to_f64();
            }
            let old = if beta == 0.0 { 0.0 } else { beta * c.get(i, j).to_f64() };
            c.set(i, j, T::from_f64(old + alpha * s));
        }
    }
}

/// Scalar right-looking Cholesky of the lower triangle, positive diagonal.
/// Returns the index of the first non-positive pivot.
pub fn chol_scalar<T: Scalar>(a: &MatrixView<T>) -> Result<(), usize> {
    let n = a.rows();
    let mut w: Vec<Vec<f64>> = (0..n).map(|i| (0..=i).map(|j| a.get(i, j).to_f64()).collect()).collect();
    for k in 0..n {
        let d = w[k][k];
        if d <= 0.0 || d.is_nan() {
            return Err(k);
        }
        let d = d.sqrt();
        w[k][k] = d;
        for row in w.iter_mut().skip(k + 1) {
            row[k] /= d;
        }
        for i in k + 1..n {
            for j in k + 1..=i {
                w[i][j] -= w[i][k] * w[j][k];
            }
        }
    }
    for (i, row) in w.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            a.set(i, j, T::from_f64(x));
        }
    }
    Ok(())
}

/// Scalar LU with partial pivoting (smallest row index wins ties). `a` is
/// overwritten with `L\U`; returns the LAPACK-style pivot rows.
pub fn lu_scalar<T: Scalar>(a: &MatrixView<T>) -> Vec<usize> {
    let (m, n) = a.shape();
    let mut w: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| a.get(i, j).to_f64()).collect()).collect();
    let mut piv = vec![];
    for k in 0..m.min(n) {
        let mut p = k;
        for i in k + 1..m {
            if w[i][k].abs() > w[p][k].abs() {
                p = i;
            }
        }
        piv.push(p);
        w.swap(k, p);
        let d = w[k][k];
        if d == 0.0 {
            continue;
        }
        for i in k + 1..m {
            let l = w[i][k] / d;
            w[i][k] = l;
            for j in k + 1..n {
                w[i][j] -= l * w[k][j];
            }
        }
    }
    for i in 0..m {
        for j in 0..n {
            a.set(i, j, T::from_f64(w[i][j]));
        }
    }
    piv
}

/// Determinant by scalar partial-pivoted elimination in f64.
pub fn det_scalar<T: Scalar>(a: &MatrixView<T>) -> f64 {
    assert_eq!(a.rows(), a.cols());
    let w = a.copy_contents(crate::views::Layout::RowMajor);
    let piv = lu_scalar(&w);
    let mut det = 1.0;
    for (k, &p) in piv.iter().enumerate() {
        det *= w.get(k, k).to_f64();
        if p != k {
            det = -det;
        }
    }
    det
}

/// Pfaffian as the signed sum over perfect matchings of `{0..n}`, reading
/// the strict upper triangle. Intended for `n <= 12`.
pub fn pfaffian_combinatorial<T: Scalar>(x: &MatrixView<T>) -> f64 {
    let n = x.rows();
    assert_eq!(n, x.cols());
    assert!(n <= 14, "combinatorial Pfaffian limited to small n");
    if n % 2 == 1 {
        return 0.0;
    }
    let w: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| x.get(i, j).to_f64()).collect()).collect();
    let idx: Vec<usize> = (0..n).collect();
    matchings(&w, &idx)
}

// Expansion along the first remaining index: pf = sum_j (-1)^(j+1) a[0][j] pf(minor).
fn matchings(w: &[Vec<f64>], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 1.0;
    }
    let first = idx[0];
    let mut total = 0.0;
    for pos in 1..idx.len() {
        let rest: Vec<usize> = idx[1..].iter().copied().filter(|&v| v != idx[pos]).collect();
        let sign = if pos % 2 == 1 { 1.0 } else { -1.0 };
        total += sign * w[first][idx[pos]] * matchings(w, &rest);
    }
    total
}

/// A dense tensor in the oracle's own representation: `data` is a `1 x len`
/// row view spanning the storage, and multi-index `idx` lives at column
/// `offset + sum idx[d] * strides[d]`.
pub struct NaiveTensor<'a, T> {
    pub data: &'a MatrixView<T>,
    pub offset: usize,
    pub dims: &'a [usize],
    pub strides: &'a [usize],
}

impl<T: Scalar> NaiveTensor<'_, T> {
    fn addr(&self, idx: &[usize]) -> usize {
        self.offset + idx.iter().zip(self.strides).map(|(i, s)| i * s).sum::<usize>()
    }
}

/// Nested loops over every label assignment:
/// `c := beta * c + alpha * sum_{contracted} a * b`, f64 accumulation.
#[allow(clippy::too_many_arguments)]
pub fn contract_naive<T: Scalar>(
    alpha: f64,
    a: &NaiveTensor<'_, T>,
    labels_a: &str,
    b: &NaiveTensor<'_, T>,
    labels_b: &str,
    beta: f64,
    c: &NaiveTensor<'_, T>,
    labels_c: &str,
) {
    let mut extent: HashMap<char, usize> = HashMap::new();
    for (labels, dims) in [(labels_a, a.dims), (labels_b, b.dims), (labels_c, c.dims)] {
        assert_eq!(labels.chars().count(), dims.len(), "label count vs rank");
        for (ch, &d) in labels.chars().zip(dims) {
            let e = extent.entry(ch).or_insert(d);
            assert_eq!(*e, d, "extent mismatch for label {ch}");
        }
    }
    let free: Vec<char> = labels_c.chars().collect();
    let summed: Vec<char> = labels_a
        .chars()
        .chain(labels_b.chars())
        .filter(|ch| !free.contains(ch))
        .fold(vec![], |mut v, ch| {
            if !v.contains(&ch) {
                v.push(ch);
            }
            v
        });
    let read = |t: &NaiveTensor<'_, T>, labels: &str, env: &HashMap<char, usize>| -> f64 {
        let idx: Vec<usize> = labels.chars().map(|ch| env[&ch]).collect();
        t.data.get(0, t.addr(&idx)).to_f64()
    };
    let mut env: HashMap<char, usize> = HashMap::new();
    for_each_index(&free, &extent, &mut env, &mut |env| {
        let mut s = 0.0f64;
        let mut inner = env.clone();
        for_each_index(&summed, &extent, &mut inner, &mut |e| {
            s += read(a, labels_a, e) * read(b, labels_b, e);
        });
        let idx: Vec<usize> = free.iter().map(|ch| env[ch]).collect();
        let at = c.addr(&idx);
        let old = if beta == 0.0 { 0.0 } else { beta * c.data.get(0, at).to_f64() };
        c.data.set(0, at, T::from_f64(old + alpha * s));
    });
}

fn for_each_index(
    labels: &[char],
    extent: &HashMap<char, usize>,
    env: &mut HashMap<char, usize>,
    f: &mut dyn FnMut(&HashMap<char, usize>),
) {
    match labels.split_first() {
        None => f(env),
        Some((&ch, rest)) => {
            for v in 0..extent[&ch] {
                env.insert(ch, v);
                for_each_index(rest, extent, env, f);
            }
        }
    }
}
