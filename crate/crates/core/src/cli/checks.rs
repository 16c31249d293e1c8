//! Invariant suites behind `famlies check`. Each suite is small enough to
//! run in well under a second.

use crate::control::{enumerate_trees, parse_tree, validate, ControlNode, OpKind, Problem};
use crate::engine::{gemm, gemmt_lower, sandwich_skew, track_allocations, KernelConfig};
use crate::factor::{cholesky, lu_partial, lu_solve, pfaffian, qr_householder, form_q, ltlt_pivoted, Uplo};
use crate::oracle::{chol_scalar, gemm_naive, pfaffian_combinatorial};
use crate::scalar::{DType, Scalar};
use crate::tensor::{contract, ContractionSpec, TensorView};
use crate::views::{partition_steps, Layout, MatrixView, Range};

use super::measure::{
    cholesky_residual, lu_residual, ltlt_residual, orthogonality, qr_residual, rng, skew, spd, to_dtype, uniform,
};

pub type SuiteResult = Result<(), String>;

pub struct Suite {
    pub name: &'static str,
    /// Filter key accepted by `check`.
    pub group: &'static str,
    pub run: fn() -> SuiteResult,
}

pub const GROUPS: [&str; 8] = ["views", "gemm", "control", "cholesky", "lu", "qr", "ltlt", "tensor"];

pub fn suites() -> Vec<Suite> {
    vec![
        Suite { name: "views/partition-coverage", group: "views", run: partition_coverage },
        Suite { name: "gemm/oracle", group: "gemm", run: gemm_oracle },
        Suite { name: "gemm/determinism", group: "gemm", run: gemm_determinism },
        Suite { name: "gemm/gemmt-canary", group: "gemm", run: gemmt_canary },
        Suite { name: "gemm/sandwich-fusion", group: "gemm", run: sandwich_fusion },
        Suite { name: "control/roundtrip", group: "control", run: control_roundtrip },
        Suite { name: "cholesky/variants", group: "cholesky", run: cholesky_variants },
        Suite { name: "cholesky/upper-stride-swap", group: "cholesky", run: cholesky_upper },
        Suite { name: "lu/reconstruction-solve", group: "lu", run: lu_suite },
        Suite { name: "qr/reconstruction", group: "qr", run: qr_suite },
        Suite { name: "ltlt/reconstruction", group: "ltlt", run: ltlt_suite },
        Suite { name: "ltlt/pfaffian-oracle", group: "ltlt", run: pfaffian_suite },
        Suite { name: "tensor/contract-oracle", group: "tensor", run: tensor_suite },
    ]
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> SuiteResult {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn eps(d: DType) -> f64 {
    d.eps()
}

fn partition_coverage() -> SuiteResult {
    for n in 0..20 {
        for bs in 1..6 {
            let mut next = 0;
            for s in partition_steps(n, bs, 1).map_err(|e| e.to_string())? {
                ensure(s.r1.start == next && s.r0 == Range::new(0, next), || format!("gap at n={n} bs={bs}"))?;
                next = s.r1.end();
            }
            ensure(next == n, || format!("n={n} bs={bs} covered {next}"))?;
        }
    }
    let a = MatrixView::<f64>::zeros(6, 5, Layout::RowMajor);
    let s = a.part(Range::new(1, 3), Range::new(2, 2));
    s.set(0, 0, 7.0);
    ensure(a.get(1, 2) == 7.0 && a.transposed().get(2, 1) == 7.0, || "subview does not alias".into())
}

fn gemm_case<T: Scalar>(m: usize, n: usize, k: usize, seed: u64) -> SuiteResult {
    let mut r = rng(seed);
    let a = uniform::<T>(m, k, &mut r);
    let b = uniform::<T>(n, k, &mut r).transposed();
    let c = uniform::<T>(m, n, &mut r);
    let c0 = c.copy_contents(Layout::ColMajor);
    gemm(T::from_f64(0.5), &a, &b, T::from_f64(-1.0), &c, &KernelConfig::default_for(T::DTYPE), 1)
        .map_err(|e| e.to_string())?;
    let want = to_dtype::<T, f64>(&c0);
    gemm_naive(0.5, &to_dtype::<T, f64>(&a), &to_dtype::<T, f64>(&b), -1.0, &want);
    let tol = 4.0 * k.max(1) as f64 * eps(T::DTYPE) * 2.0;
    for i in 0..m {
        for j in 0..n {
            let d = (c.get(i, j).to_f64() - want.get(i, j)).abs();
            ensure(d <= tol, || format!("{m}x{n}x{k} {}: error {d:e} at ({i},{j})", T::DTYPE))?;
        }
    }
    Ok(())
}

fn gemm_oracle() -> SuiteResult {
    for (s, &(m, n, k)) in [(1, 1, 1), (7, 5, 3), (17, 13, 33), (40, 9, 64), (3, 50, 0)].iter().enumerate() {
        gemm_case::<f64>(m, n, k, s as u64)?;
        gemm_case::<f32>(m, n, k, s as u64)?;
    }
    Ok(())
}

fn gemm_determinism() -> SuiteResult {
    let mut r = rng(5);
    let a = uniform::<f64>(160, 96, &mut r);
    let b = uniform::<f64>(96, 150, &mut r);
    let cfg = KernelConfig { mc: 32, ..KernelConfig::default_for(DType::F64) };
    let run = |ways| {
        let c = MatrixView::<f64>::zeros(160, 150, Layout::ColMajor);
        gemm(1.0, &a, &b, 0.0, &c, &cfg, ways).map(|_| c)
    };
    let base = run(1).map_err(|e| e.to_string())?;
    for ways in [2, 3, 4] {
        let c = run(ways).map_err(|e| e.to_string())?;
        ensure(c.bit_eq(&base), || format!("ways={ways} differs from ways=1"))?;
    }
    Ok(())
}

fn gemmt_canary() -> SuiteResult {
    let mut r = rng(6);
    let a = uniform::<f64>(30, 11, &mut r);
    let c = MatrixView::from_fn(30, 30, Layout::ColMajor, |i, j| if i < j { -123.5 } else { 0.0 });
    gemmt_lower(1.0, &a, &a.transposed(), 0.0, &c, &KernelConfig { mc: 8, ..KernelConfig::default_for(DType::F64) }, 2)
        .map_err(|e| e.to_string())?;
    for i in 0..30 {
        for j in 0..30 {
            if i < j {
                ensure(c.get(i, j).to_bits() == (-123.5f64).to_bits(), || format!("canary ({i},{j}) overwritten"))?;
            }
        }
    }
    Ok(())
}

fn sandwich_fusion() -> SuiteResult {
    let (n, k) = (37, 9);
    let mut r = rng(7);
    let a = uniform::<f64>(n, k, &mut r);
    let t: Vec<f64> = (0..k - 1).map(|i| 0.5 + i as f64).collect();
    let fused = uniform::<f64>(n, n, &mut r);
    let unfused = fused.copy_contents(Layout::ColMajor);
    let cfg = KernelConfig::default_for(DType::F64);
    let (res, stats) = track_allocations(|| sandwich_skew(&fused, &a, &t, &cfg, 1));
    res.map_err(|e| e.to_string())?;
    // explicit W = T * A^T
    let w = MatrixView::from_fn(k, n, Layout::ColMajor, |g, j| {
        let up = if g > 0 { t[g - 1] * a.get(j, g - 1) } else { 0.0 };
        let down = if g + 1 < k { t[g] * a.get(j, g + 1) } else { 0.0 };
        up - down
    });
    gemmt_lower(-1.0, &a, &w, 1.0, &unfused, &cfg, 1).map_err(|e| e.to_string())?;
    let scale = 1.0 + a.max_abs() * a.max_abs() * t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..n {
            let d = (fused.get(i, j) - unfused.get(i, j)).abs();
            ensure(d <= 8.0 * k as f64 * f64::EPSILON * scale, || format!("({i},{j}) differs by {d:e}"))?;
        }
    }
    let bound = cfg.mc * cfg.kc + cfg.kc * cfg.nc;
    ensure(stats.peak_elements <= bound, || format!("peak {} > {bound}", stats.peak_elements))
}

fn control_roundtrip() -> SuiteResult {
    let trees = enumerate_trees(OpKind::Cholesky, &[1, 2, 3], &[64, 128], 1).map_err(|e| e.to_string())?;
    ensure(trees.len() == 18, || format!("expected 18 trees, got {}", trees.len()))?;
    for t in &trees {
        let back = parse_tree(&t.to_json()).map_err(|e| e.to_string())?;
        ensure(&back == t, || format!("{} does not round-trip", t.descriptor()))?;
        validate(t, &Problem::square(OpKind::Cholesky, 300)).map_err(|v| format!("{v:?}"))?;
    }
    let bad = parse_tree(r#"{"op":"cholesky","variant":4,"bs":8}"#);
    ensure(bad.as_ref().is_err_and(|e| e.to_string().contains("variant")), || format!("variant 4: {bad:?}"))
}

fn cholesky_variants() -> SuiteResult {
    let n = 48;
    let a = spd::<f64>(n, &mut rng(8));
    let reference = a.copy_contents(Layout::ColMajor);
    chol_scalar(&reference).map_err(|i| format!("oracle failed at {i}"))?;
    let mut trees = vec![];
    for v in 1..=3 {
        trees.push(ControlNode::unblocked(OpKind::Cholesky, v));
        for leaf in 1..=3 {
            for bs in [1, 7, 32] {
                trees.push(ControlNode::blocked(OpKind::Cholesky, v, bs, Some(ControlNode::unblocked(OpKind::Cholesky, leaf))));
            }
        }
    }
    for tree in &trees {
        let f = a.copy_contents(Layout::ColMajor);
        cholesky(&f, Uplo::Lower, tree).map_err(|e| e.to_string())?;
        let res = cholesky_residual(&a, &f);
        ensure(res <= 10.0 * n as f64 * f64::EPSILON, || format!("{}: residual {res:e}", tree.descriptor()))?;
        for i in 0..n {
            for j in 0..=i {
                let d = (f.get(i, j) - reference.get(i, j)).abs();
                ensure(d <= 100.0 * f64::EPSILON * a.frobenius_norm(), || {
                    format!("{}: L[{i},{j}] off by {d:e}", tree.descriptor())
                })?;
            }
        }
    }
    Ok(())
}

fn cholesky_upper() -> SuiteResult {
    let a = spd::<f64>(70, &mut rng(9));
    let tree = ControlNode::blocked(OpKind::Cholesky, 2, 16, None);
    let lo = a.copy_contents(Layout::ColMajor);
    let up = a.copy_contents(Layout::ColMajor);
    cholesky(&lo, Uplo::Lower, &tree).map_err(|e| e.to_string())?;
    cholesky(&up, Uplo::Upper, &tree).map_err(|e| e.to_string())?;
    for i in 0..70 {
        for j in 0..=i {
            ensure(lo.get(i, j).to_bits() == up.get(j, i).to_bits(), || format!("mismatch at ({i},{j})"))?;
        }
    }
    Ok(())
}

fn lu_suite() -> SuiteResult {
    let n = 60;
    let a = uniform::<f64>(n, n, &mut rng(10));
    for d in 0..n {
        a.set(d, d, a.get(d, d) + n as f64);
    }
    for bs in [1, 8, 32] {
        let tree = ControlNode::blocked(OpKind::Lu, 1, bs, None);
        let f = a.copy_contents(Layout::ColMajor);
        let piv = lu_partial(&f, &tree).map_err(|e| e.to_string())?;
        let res = lu_residual(&a, &f, &piv);
        ensure(res <= 10.0 * n as f64 * f64::EPSILON, || format!("bs={bs}: residual {res:e}"))?;
        let x = uniform::<f64>(n, 2, &mut rng(11));
        let b = MatrixView::<f64>::zeros(n, 2, Layout::ColMajor);
        gemm_naive(1.0, &a, &x, 0.0, &b);
        let b0 = b.copy_contents(Layout::ColMajor);
        lu_solve(&f, &piv, &b).map_err(|e| e.to_string())?;
        let r = b0.copy_contents(Layout::ColMajor);
        gemm_naive(1.0, &a, &b, -1.0, &r);
        let rel = r.frobenius_norm() / (a.frobenius_norm() * b.frobenius_norm());
        ensure(rel <= 10.0 * n as f64 * f64::EPSILON, || format!("bs={bs}: solve residual {rel:e}"))?;
    }
    Ok(())
}

fn qr_suite() -> SuiteResult {
    let (m, n) = (90, 60);
    let a = uniform::<f64>(m, n, &mut rng(12));
    for bs in [1, 16, 60] {
        let tree = ControlNode::blocked(OpKind::Qr, 1, bs, None);
        let f = a.copy_contents(Layout::ColMajor);
        let refl = qr_householder(&f, &tree).map_err(|e| e.to_string())?;
        let q = form_q(&f, &refl, n).map_err(|e| e.to_string())?;
        let (res, orth) = (qr_residual(&a, &q, &f), orthogonality(&q));
        let tol = 10.0 * m as f64 * f64::EPSILON;
        ensure(res <= tol && orth <= tol, || format!("bs={bs}: residual {res:e}, orthogonality {orth:e}"))?;
    }
    Ok(())
}

fn ltlt_suite() -> SuiteResult {
    for n in [10, 40] {
        let x = skew::<f64>(n, &mut rng(13));
        for tree in [ControlNode::unblocked(OpKind::Ltlt, 1), ControlNode::blocked(OpKind::Ltlt, 1, 4, None)] {
            let f = x.copy_contents(Layout::ColMajor);
            let (piv, t) = ltlt_pivoted(&f, &tree).map_err(|e| e.to_string())?;
            let res = ltlt_residual(&x, &f, &piv, &t);
            ensure(res <= 10.0 * n as f64 * f64::EPSILON, || format!("n={n} {}: residual {res:e}", tree.descriptor()))?;
        }
    }
    Ok(())
}

fn pfaffian_suite() -> SuiteResult {
    let mut r = rng(14);
    for n in [2, 4, 6, 8] {
        let x = skew::<f64>(n, &mut r);
        let want = pfaffian_combinatorial(&x);
        let got = pfaffian(&x.copy_contents(Layout::ColMajor), &ControlNode::blocked(OpKind::Ltlt, 1, 2, None))
            .map_err(|e| e.to_string())?;
        ensure((got - want).abs() <= 1e-10 * want.abs().max(1e-300), || format!("n={n}: {got} vs {want}"))?;
    }
    Ok(())
}

fn tensor_suite() -> SuiteResult {
    let mut r = rng(15);
    let spec: ContractionSpec = "abk,kc->abc".parse().map_err(|e: crate::tensor::TensorError| e.to_string())?;
    let fill = |dims: &[usize], r: &mut rand_chacha::ChaCha8Rng| {
        let m = uniform::<f64>(1, dims.iter().product(), r);
        TensorView::from_vec(dims, m.to_row_major_vec())
    };
    let a = fill(&[3, 4, 5], &mut r).map_err(|e| e.to_string())?;
    let b = fill(&[5, 2], &mut r).map_err(|e| e.to_string())?;
    let c = TensorView::<f64>::zeros(&[3, 4, 2]).map_err(|e| e.to_string())?;
    contract(1.0, &a, &b, 0.0, &c, &spec, &KernelConfig::default_for(DType::F64), 1).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    c.for_each_index(|i| {
        let want: f64 = (0..5).map(|k| a.get(&[i[0], i[1], k]) * b.get(&[k, i[2]])).sum();
        worst = worst.max((c.get(i) - want).abs());
    });
    ensure(worst <= 4.0 * 5.0 * f64::EPSILON * 5.0, || format!("contraction error {worst:e}"))
}
