//! Seeded inputs, timed driver calls and inline residual checks.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{ControlNode, OpKind};
use crate::engine::{gemm, KernelConfig};
use crate::factor::{
    apply_pivots, cholesky, form_q, ltlt_pivoted, ltlt_unit_lower, lu_partial, qr_householder, Direction, FactorError,
    Uplo,
};
use crate::oracle::{contract_naive, gemm_naive, NaiveTensor};
use crate::scalar::{DType, Scalar};
use crate::tensor::{contract, ContractionSpec, TensorView};
use crate::views::{Layout, MatrixView};

/// Largest dimension for which the oracle residual is computed.
pub const ORACLE_CAP: usize = 512;

pub const HEADER: &str = "op,n,tree,mc,kc,nc,mr,nr,ways,time_s,gflops,max_rel_err";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub op: String,
    pub n: usize,
    pub tree: String,
    pub cfg: KernelConfig,
    pub ways: usize,
    pub time_s: f64,
    pub gflops: f64,
    pub max_rel_err: Option<f64>,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let c = &self.cfg;
        format!(
            "{},{},{},{},{},{},{},{},{},{:e},{:.4},{}",
            self.op,
            self.n,
            self.tree,
            c.mc,
            c.kc,
            c.nc,
            c.mr,
            c.nr,
            self.ways,
            self.time_s,
            self.gflops,
            self.max_rel_err.map(|e| format!("{e:e}")).unwrap_or_default()
        )
    }
}

/// Problem sizes; `m` and `k` default to `n` where the op uses them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

pub fn flops(op: OpKind, d: Dims) -> f64 {
    let (m, n, k) = (d.m as f64, d.n as f64, d.k as f64);
    match op {
        OpKind::Gemm => 2.0 * m * n * k,
        OpKind::Cholesky | OpKind::Ltlt => n * n * n / 3.0,
        OpKind::Lu => 2.0 * n * n * n / 3.0,
        OpKind::Qr => 2.0 * n * n * (m - n / 3.0),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform(-1, 1) entries, drawn column by column.
pub fn uniform<T: Scalar>(m: usize, n: usize, rng: &mut ChaCha8Rng) -> MatrixView<T> {
    let v = MatrixView::zeros(m, n, Layout::ColMajor);
    for j in 0..n {
        for i in 0..m {
            v.set(i, j, T::from_f64(rng.gen_range(-1.0..1.0)));
        }
    }
    v
}

/// `M M^T + n I`, formed in f64 and rounded once.
pub fn spd<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> MatrixView<T> {
    let m = uniform::<f64>(n, n, rng);
    let a = MatrixView::<f64>::identity(n, Layout::ColMajor);
    gemm(1.0, &m, &m.transposed(), n as f64, &a, &KernelConfig::default_for(DType::F64), 1)
        .expect("conformal product");
    to_dtype(&a)
}

/// `M - M^T`.
pub fn skew<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> MatrixView<T> {
    let m = uniform::<f64>(n, n, rng);
    let x = MatrixView::from_fn(n, n, Layout::ColMajor, |i, j| m.get(i, j) - m.get(j, i));
    to_dtype(&x)
}

pub fn to_dtype<S: Scalar, T: Scalar>(a: &MatrixView<S>) -> MatrixView<T> {
    MatrixView::from_fn(a.rows(), a.cols(), Layout::ColMajor, |i, j| a.get(i, j).cast())
}

fn product(a: &MatrixView<f64>, b: &MatrixView<f64>) -> MatrixView<f64> {
    let c = MatrixView::zeros(a.rows(), b.cols(), Layout::ColMajor);
    gemm_naive(1.0, a, b, 0.0, &c);
    c
}

fn rel_frobenius(x: &MatrixView<f64>, reference: &MatrixView<f64>) -> f64 {
    let d = MatrixView::from_fn(x.rows(), x.cols(), Layout::ColMajor, |i, j| x.get(i, j) - reference.get(i, j));
    let r = reference.frobenius_norm();
    if r == 0.0 {
        d.frobenius_norm()
    } else {
        d.frobenius_norm() / r
    }
}

fn masked(a: &MatrixView<f64>, keep: impl Fn(usize, usize) -> Option<f64>) -> MatrixView<f64> {
    MatrixView::from_fn(a.rows(), a.cols(), Layout::ColMajor, |i, j| keep(i, j).unwrap_or(0.0))
}

/// `||A - L L^T||_F / ||A||_F` from the lower triangle of `f`.
pub fn cholesky_residual(a: &MatrixView<f64>, f: &MatrixView<f64>) -> f64 {
    let l = masked(f, |i, j| (i >= j).then(|| f.get(i, j)));
    rel_frobenius(&product(&l, &l.transposed()), a)
}

/// `||P A - L U||_F / ||A||_F`.
pub fn lu_residual(a: &MatrixView<f64>, f: &MatrixView<f64>, piv: &crate::factor::PivotVector) -> f64 {
    let (m, n) = a.shape();
    let k = m.min(n);
    let l = MatrixView::from_fn(m, k, Layout::ColMajor, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => f.get(i, j),
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Less => 0.0,
    });
    let u = MatrixView::from_fn(k, n, Layout::ColMajor, |i, j| if i <= j { f.get(i, j) } else { 0.0 });
    let pa = a.copy_contents(Layout::ColMajor);
    apply_pivots(&pa, piv, Direction::Forward).expect("pivots in range");
    rel_frobenius(&product(&l, &u), &pa)
}

/// `||A - Q R||_F / ||A||_F` with the thin `Q`.
pub fn qr_residual(a: &MatrixView<f64>, q: &MatrixView<f64>, f: &MatrixView<f64>) -> f64 {
    let n = a.cols();
    let r = MatrixView::from_fn(n, n, Layout::ColMajor, |i, j| if i <= j { f.get(i, j) } else { 0.0 });
    rel_frobenius(&product(q, &r), a)
}

/// `||Q^T Q - I||_F`.
pub fn orthogonality(q: &MatrixView<f64>) -> f64 {
    let g = product(&q.transposed(), q);
    let n = g.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = g.get(i, j) - if i == j { 1.0 } else { 0.0 };
            s += d * d;
        }
    }
    s.sqrt()
}

/// `||P X P^T - L T L^T||_F / ||X||_F`.
pub fn ltlt_residual(
    x: &MatrixView<f64>,
    f: &MatrixView<f64>,
    piv: &crate::factor::PivotVector,
    t: &crate::factor::TridiagSkew<f64>,
) -> f64 {
    let l = ltlt_unit_lower(f);
    let ltl = product(&product(&l, &t.to_dense()), &l.transposed());
    let pxp = x.copy_contents(Layout::ColMajor);
    for (k, &r) in piv.as_slice().iter().enumerate() {
        if r != k {
            pxp.swap_rows(k, r);
            pxp.transposed().swap_rows(k, r);
        }
    }
    rel_frobenius(&ltl, &pxp)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One warm-up call, then the median wall time of `repeats` calls. `setup`
/// runs outside the timed region.
fn time<S>(repeats: usize, mut setup: impl FnMut() -> S, mut call: impl FnMut(&S)) -> (f64, S) {
    let s = setup();
    call(&s);
    let mut times = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats {
        let s = setup();
        let t0 = Instant::now();
        call(&s);
        times.push(t0.elapsed().as_secs_f64());
        last = Some(s);
    }
    (median(times), last.unwrap_or(s))
}

#[derive(Debug)]
pub enum MeasureError {
    Factor(FactorError),
    Other(String),
}

impl std::fmt::Display for MeasureError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeasureError::Factor(e) => write!(f, "{e}"),
            MeasureError::Other(e) => write!(f, "{e}"),
        }
    }
}

/// Benchmarks `tree` on seeded inputs. The residual is left blank above
/// [`ORACLE_CAP`].
pub fn measure<T: Scalar>(
    op: OpKind,
    dims: Dims,
    tree: &ControlNode,
    repeats: usize,
    seed: u64,
) -> Result<SweepRow, MeasureError> {
    let cfg = tree.kernel_config(KernelConfig::default_for(T::DTYPE));
    let mut rng = rng(seed);
    let check = dims.m.max(dims.n).max(dims.k) <= ORACLE_CAP;
    let mut failure: Option<FactorError> = None;
    let (time_s, err) = match op {
        OpKind::Gemm => {
            let a = uniform::<T>(dims.m, dims.k, &mut rng);
            let b = uniform::<T>(dims.k, dims.n, &mut rng);
            let (t, c) = time(
                repeats,
                || MatrixView::<T>::zeros(dims.m, dims.n, Layout::ColMajor),
                |c| {
                    if let Err(e) = gemm(T::one(), &a, &b, T::zero(), c, &cfg, tree.ways) {
                        failure.get_or_insert(e.into());
                    }
                },
            );
            let err = check.then(|| {
                let r = MatrixView::<f64>::zeros(dims.m, dims.n, Layout::ColMajor);
                gemm_naive(1.0, &to_dtype::<T, f64>(&a), &to_dtype::<T, f64>(&b), 0.0, &r);
                let scale = r.max_abs().max(f64::MIN_POSITIVE);
                let mut e = 0.0f64;
                for i in 0..dims.m {
                    for j in 0..dims.n {
                        e = e.max((c.get(i, j).to_f64() - r.get(i, j)).abs());
                    }
                }
                e / scale
            });
            (t, err)
        }
        OpKind::Cholesky => {
            let a = spd::<T>(dims.n, &mut rng);
            let (t, f) = time(
                repeats,
                || a.copy_contents(Layout::ColMajor),
                |f| {
                    if let Err(e) = cholesky(f, Uplo::Lower, tree) {
                        failure.get_or_insert(e);
                    }
                },
            );
            (t, check.then(|| cholesky_residual(&to_dtype(&a), &to_dtype(&f))))
        }
        OpKind::Lu => {
            let a = uniform::<T>(dims.m, dims.n, &mut rng);
            let mut piv = None;
            let (t, f) = time(
                repeats,
                || a.copy_contents(Layout::ColMajor),
                |f| match lu_partial(f, tree) {
                    Ok(p) => piv = Some(p),
                    Err(e) => {
                        failure.get_or_insert(e);
                    }
                },
            );
            let err = match (check, &piv) {
                (true, Some(p)) => Some(lu_residual(&to_dtype(&a), &to_dtype(&f), p)),
                _ => None,
            };
            (t, err)
        }
        OpKind::Qr => {
            let a = uniform::<T>(dims.m, dims.n, &mut rng);
            let mut refl = None;
            let (t, f) = time(
                repeats,
                || a.copy_contents(Layout::ColMajor),
                |f| match qr_householder(f, tree) {
                    Ok(r) => refl = Some(r),
                    Err(e) => {
                        failure.get_or_insert(e);
                    }
                },
            );
            let err = match (check, &refl) {
                (true, Some(r)) => {
                    let q = form_q(&f, r, dims.n).map_err(MeasureError::Factor)?;
                    Some(qr_residual(&to_dtype(&a), &to_dtype(&q), &to_dtype(&f)))
                }
                _ => None,
            };
            (t, err)
        }
        OpKind::Ltlt => {
            let x = skew::<T>(dims.n, &mut rng);
            let mut out = None;
            let (t, f) = time(
                repeats,
                || x.copy_contents(Layout::ColMajor),
                |f| match ltlt_pivoted(f, tree) {
                    Ok(r) => out = Some(r),
                    Err(e) => {
                        failure.get_or_insert(e);
                    }
                },
            );
            let err = match (check, &out) {
                (true, Some((piv, t))) => {
                    let t64 = crate::factor::TridiagSkew { n: t.n, t: t.t.iter().map(|v| Scalar::to_f64(*v)).collect() };
                    Some(ltlt_residual(&to_dtype(&x), &to_dtype(&f), piv, &t64))
                }
                _ => None,
            };
            (t, err)
        }
    };
    if let Some(e) = failure {
        return Err(MeasureError::Factor(e));
    }
    Ok(SweepRow {
        op: op.to_string(),
        n: dims.n,
        tree: tree.descriptor(),
        cfg,
        ways: tree.ways,
        time_s,
        gflops: flops(op, dims) / time_s.max(1e-12) / 1e9,
        max_rel_err: err,
    })
}

/// Contraction benchmark with every label of extent `extent`.
pub fn measure_contract<T: Scalar>(
    spec: &ContractionSpec,
    extent: usize,
    ways: usize,
    repeats: usize,
    seed: u64,
) -> Result<SweepRow, MeasureError> {
    let cfg = KernelConfig::default_for(T::DTYPE);
    let mut rng = rng(seed);
    let dims = |labels: &[char]| vec![extent; labels.len()];
    let mut fill = |labels: &[char]| {
        TensorView::<T>::from_fn(&dims(labels), |_| T::from_f64(rng.gen_range(-1.0..1.0)))
            .map_err(|e| MeasureError::Other(e.to_string()))
    };
    let a = fill(&spec.a)?;
    let b = fill(&spec.b)?;
    let mut failure = None;
    let (t, c) = time(
        repeats,
        || TensorView::<T>::zeros(&dims(&spec.c)).expect("rank checked by the spec"),
        |c| {
            if let Err(e) = contract(T::one(), &a, &b, T::zero(), c, spec, &cfg, ways) {
                failure.get_or_insert(e.to_string());
            }
        },
    );
    if let Some(e) = failure {
        return Err(MeasureError::Other(e));
    }
    let mut labels: Vec<char> = spec.a.iter().chain(&spec.b).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let work = (extent as f64).powi(labels.len() as i32);
    let err = (work <= 1e8).then(|| {
        let r = TensorView::<T>::zeros(&dims(&spec.c)).expect("rank checked by the spec");
        let (fa, fb, fr) = (a.flat_storage(), b.flat_storage(), r.flat_storage());
        let ta = NaiveTensor { data: &fa, offset: a.offset(), dims: a.dims(), strides: a.strides() };
        let tb = NaiveTensor { data: &fb, offset: b.offset(), dims: b.dims(), strides: b.strides() };
        let tr = NaiveTensor { data: &fr, offset: r.offset(), dims: r.dims(), strides: r.strides() };
        let s = |v: &[char]| v.iter().collect::<String>();
        contract_naive(1.0, &ta, &s(&spec.a), &tb, &s(&spec.b), 0.0, &tr, &s(&spec.c));
        let (got, want) = (c.to_vec(), r.to_vec());
        let scale = want.iter().fold(0.0f64, |m, v| m.max(Scalar::to_f64(*v).abs())).max(f64::MIN_POSITIVE);
        got.iter().zip(&want).fold(0.0f64, |m, (g, w)| m.max((Scalar::to_f64(*g) - Scalar::to_f64(*w)).abs())) / scale
    });
    Ok(SweepRow {
        op: "contract".into(),
        n: extent,
        tree: spec.to_string().replace(',', ";"),
        cfg,
        ways,
        time_s: t,
        gflops: 2.0 * work / t.max(1e-12) / 1e9,
        max_rel_err: err,
    })
}
