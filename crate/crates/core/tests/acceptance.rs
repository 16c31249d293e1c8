//! Acceptance criteria, one test per criterion. Each prints a single
//! `PASS`/`FAIL` line straight to stderr so it shows up without
//! `--nocapture`.

use std::io::Write;
use std::time::{Duration, Instant};

use famlies::cli::{self, rng, skew, spd, uniform, HEADER};
use famlies::control::{ControlNode, OpKind};
use famlies::engine::{gemm, gemmt_lower, sandwich_skew, track_allocations, KernelConfig};
use famlies::factor::{cholesky, form_q, ltlt_pivoted, lu_partial, lu_solve, pfaffian, qr_householder, Uplo};
use famlies::oracle::{chol_scalar, contract_naive, det_scalar, gemm_naive, pfaffian_combinatorial, NaiveTensor};
use famlies::scalar::{DType, Scalar};
use famlies::tensor::{block_scatter, contract_planned, ContractionPlan, ContractionSpec, TensorView};
use famlies::views::{Layout, MatrixView, Range};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn criterion(id: u32, name: &str, budget_s: u64, body: impl FnOnce() -> Outcome) {
    let t0 = Instant::now();
    let mut res = body();
    let el = t0.elapsed();
    if res.is_ok() && el > Duration::from_secs(budget_s) {
        res = Err(format!("took {:.1}s, budget {budget_s}s", el.as_secs_f64()));
    }
    let line = match &res {
        Ok(d) => format!("PASS [{id:2}] {name} ({:.2}s) {d}\n", el.as_secs_f64()),
        Err(d) => format!("FAIL [{id:2}] {name} ({:.2}s) {d}\n", el.as_secs_f64()),
    };
    std::io::stderr().lock().write_all(line.as_bytes()).unwrap();
    if let Err(e) = res {
        panic!("criterion {id} failed: {e}");
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn copy(a: &MatrixView<f64>) -> MatrixView<f64> {
    a.copy_contents(Layout::ColMajor)
}

fn residual(a: &MatrixView<f64>, approx: &MatrixView<f64>) -> f64 {
    let d = MatrixView::from_fn(a.rows(), a.cols(), Layout::ColMajor, |i, j| a.get(i, j) - approx.get(i, j));
    d.frobenius_norm() / a.frobenius_norm()
}

fn product(a: &MatrixView<f64>, b: &MatrixView<f64>) -> MatrixView<f64> {
    let c = MatrixView::zeros(a.rows(), b.cols(), Layout::ColMajor);
    gemm_naive(1.0, a, b, 0.0, &c);
    c
}

const EPS: f64 = f64::EPSILON;

#[derive(Clone, Copy, Debug)]
enum Shape {
    Contiguous,
    Transposed,
    Padded,
}

/// An `m x n` operand with the requested memory shape.
fn operand<T: Scalar>(m: usize, n: usize, shape: Shape, r: &mut ChaCha8Rng) -> MatrixView<T> {
    let fill = |v: &MatrixView<T>, r: &mut ChaCha8Rng| {
        for j in 0..v.cols() {
            for i in 0..v.rows() {
                v.set(i, j, T::from_f64(r.gen_range(-1.0..1.0)));
            }
        }
    };
    let v = match shape {
        Shape::Contiguous => MatrixView::zeros(m, n, Layout::ColMajor),
        Shape::Transposed => MatrixView::zeros(n, m, Layout::ColMajor).transposed(),
        Shape::Padded => {
            let big = MatrixView::zeros(m + 3, n + 2, Layout::ColMajor);
            big.fill(T::from_f64(f64::NAN));
            big.part(Range::new(2, m), Range::new(1, n))
        }
    };
    fill(&v, r);
    v
}

fn gemm_case<T: Scalar>(r: &mut ChaCha8Rng, shape: Shape) -> Result<f64, String> {
    let (m, n, k) = (r.gen_range(1..=64), r.gen_range(1..=64), r.gen_range(1..=64));
    let (alpha, beta) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
    let a = operand::<T>(m, k, shape, r);
    let b = operand::<T>(k, n, shape, r);
    let c = operand::<T>(m, n, shape, r);
    let want = MatrixView::from_fn(m, n, Layout::ColMajor, |i, j| c.get(i, j).to_f64());
    let wide = |x: &MatrixView<T>| MatrixView::from_fn(x.rows(), x.cols(), Layout::ColMajor, |i, j| x.get(i, j).to_f64());
    gemm_naive(alpha, &wide(&a), &wide(&b), beta, &want);
    gemm(T::from_f64(alpha), &a, &b, T::from_f64(beta), &c, &KernelConfig::default_for(T::DTYPE), 1)
        .map_err(|e| e.to_string())?;
    // operands hold the rounded alpha/beta products, so compare in units of the
    // largest term that enters each entry
    let scale = alpha.abs() * k as f64 + beta.abs() + 1.0;
    let tol = 4.0 * k as f64 * T::DTYPE.eps() * scale;
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..n {
            let e = (c.get(i, j).to_f64() - want.get(i, j)).abs();
            check(e <= tol, || format!("{:?} {} {m}x{n}x{k}: error {e:e} > {tol:e}", shape, T::DTYPE))?;
            worst = worst.max(e / tol);
        }
    }
    Ok(worst)
}

#[test]
fn c01_gemm_oracle_equivalence() {
    criterion(1, "gemm oracle equivalence", 30, || {
        let mut r = rng(101);
        let mut worst = 0.0f64;
        let mut cases = 0;
        for _ in 0..200 {
            for shape in [Shape::Contiguous, Shape::Transposed, Shape::Padded] {
                worst = worst.max(gemm_case::<f32>(&mut r, shape)?);
                worst = worst.max(gemm_case::<f64>(&mut r, shape)?);
                cases += 2;
            }
        }
        Ok(format!("{cases} cases, worst error/tolerance {worst:.3}"))
    });
}

#[test]
fn c02_determinism_under_parallelism() {
    criterion(2, "gemm determinism across ways", 10, || {
        let n = 512;
        let mut r = rng(102);
        let (a, b) = (uniform::<f64>(n, n, &mut r), uniform::<f64>(n, n, &mut r));
        let cfg = KernelConfig::default_for(DType::F64);
        let run = |ways| {
            let c = MatrixView::<f64>::zeros(n, n, Layout::ColMajor);
            gemm(1.0, &a, &b, 0.0, &c, &cfg, ways).map(|_| c).map_err(|e| e.to_string())
        };
        let base = run(1)?;
        for ways in [2, 4] {
            check(run(ways)?.bit_eq(&base), || format!("ways={ways} differs from ways=1"))?;
        }
        Ok("ways 1, 2, 4 bit-identical".into())
    });
}

#[test]
fn c03_cholesky_family() {
    criterion(3, "cholesky family", 60, || {
        let mut trees = 0;
        let mut worst = (0.0f64, 0.0f64);
        for n in [50, 100, 200] {
            let a = spd::<f64>(n, &mut rng(103 + n as u64));
            let oracle = copy(&a);
            chol_scalar(&oracle).map_err(|i| format!("oracle pivot {i}"))?;
            let (res_tol, elem_tol) = (10.0 * n as f64 * EPS, 100.0 * EPS * a.frobenius_norm());
            for variant in 1..=3 {
                for bs in [1, 7, 32, 128] {
                    for leaf in 1..=3 {
                        let tree = ControlNode::blocked(
                            OpKind::Cholesky,
                            variant,
                            bs,
                            Some(ControlNode::unblocked(OpKind::Cholesky, leaf)),
                        );
                        let f = copy(&a);
                        cholesky(&f, Uplo::Lower, &tree).map_err(|e| e.to_string())?;
                        let l = MatrixView::from_fn(n, n, Layout::ColMajor, |i, j| if i >= j { f.get(i, j) } else { 0.0 });
                        let res = residual(&a, &product(&l, &l.transposed()));
                        let mut elem = 0.0f64;
                        for j in 0..n {
                            for i in j..n {
                                elem = elem.max((f.get(i, j) - oracle.get(i, j)).abs());
                            }
                        }
                        let d = tree.descriptor();
                        check(res <= res_tol, || format!("n={n} {d}: residual {res:e}"))?;
                        check(elem <= elem_tol, || format!("n={n} {d}: elementwise {elem:e} > {elem_tol:e}"))?;
                        worst = (worst.0.max(res / res_tol), worst.1.max(elem / elem_tol));
                        trees += 1;
                    }
                }
            }
        }
        Ok(format!("{trees} runs, worst residual/tol {:.3}, elementwise/tol {:.3}", worst.0, worst.1))
    });
}

#[test]
fn c04_upper_via_stride_swap() {
    criterion(4, "upper cholesky via stride swap", 5, || {
        for (n, tree) in [
            (90, ControlNode::blocked(OpKind::Cholesky, 1, 16, None)),
            (90, ControlNode::blocked(OpKind::Cholesky, 2, 32, None)),
            (90, ControlNode::blocked(OpKind::Cholesky, 3, 7, None)),
            (33, ControlNode::unblocked(OpKind::Cholesky, 2)),
        ] {
            let a = spd::<f64>(n, &mut rng(104));
            let (lo, up) = (copy(&a), copy(&a));
            cholesky(&lo, Uplo::Lower, &tree).map_err(|e| e.to_string())?;
            cholesky(&up, Uplo::Upper, &tree).map_err(|e| e.to_string())?;
            let upt = up.transposed();
            for j in 0..n {
                for i in j..n {
                    check(lo.get(i, j).to_bits() == upt.get(i, j).to_bits(), || {
                        format!("{}: mismatch at ({i},{j})", tree.descriptor())
                    })?;
                }
            }
        }
        Ok("4 trees bitwise equal".into())
    });
}

#[test]
fn c05_lu_and_solve() {
    criterion(5, "lu and solve", 30, || {
        let mut worst = (0.0f64, 0.0f64);
        for n in [60, 120] {
            let a = uniform::<f64>(n, n, &mut rng(105 + n as u64));
            for d in 0..n {
                a.set(d, d, a.get(d, d) + n as f64);
            }
            let tol = 10.0 * n as f64 * EPS;
            for bs in [1, 8, 32] {
                let tree = ControlNode::blocked(OpKind::Lu, 1, bs, None);
                let f = copy(&a);
                let piv = lu_partial(&f, &tree).map_err(|e| e.to_string())?;
                let res = famlies::cli::lu_residual(&a, &f, &piv);
                check(res <= tol, || format!("n={n} bs={bs}: residual {res:e}"))?;
                let x = uniform::<f64>(n, 3, &mut rng(205));
                let b = product(&a, &x);
                let sol = copy(&b);
                lu_solve(&f, &piv, &sol).map_err(|e| e.to_string())?;
                let rb = MatrixView::from_fn(n, 3, Layout::ColMajor, |i, j| b.get(i, j));
                gemm_naive(-1.0, &a, &sol, 1.0, &rb);
                let rel = rb.frobenius_norm() / (a.frobenius_norm() * sol.frobenius_norm());
                check(rel <= tol, || format!("n={n} bs={bs}: solve residual {rel:e}"))?;
                worst = (worst.0.max(res / tol), worst.1.max(rel / tol));
            }
        }
        Ok(format!("worst residual/tol {:.3}, solve/tol {:.3}", worst.0, worst.1))
    });
}

#[test]
fn c06_qr() {
    criterion(6, "householder qr", 30, || {
        let (m, n) = (120, 80);
        let a = uniform::<f64>(m, n, &mut rng(106));
        let tol = 10.0 * m as f64 * EPS;
        let mut worst = (0.0f64, 0.0f64);
        for bs in [1, 16, 80] {
            let f = copy(&a);
            let refl = qr_householder(&f, &ControlNode::blocked(OpKind::Qr, 1, bs, None)).map_err(|e| e.to_string())?;
            let q = form_q(&f, &refl, n).map_err(|e| e.to_string())?;
            let (res, orth) = (cli::qr_residual(&a, &q, &f), cli::orthogonality(&q));
            check(res <= tol, || format!("bs={bs}: residual {res:e}"))?;
            check(orth <= tol, || format!("bs={bs}: orthogonality {orth:e}"))?;
            worst = (worst.0.max(res / tol), worst.1.max(orth / tol));
        }
        Ok(format!("worst residual/tol {:.3}, orthogonality/tol {:.3}", worst.0, worst.1))
    });
}

fn permute_sym(x: &MatrixView<f64>, p: &[usize]) -> MatrixView<f64> {
    MatrixView::from_fn(x.rows(), x.cols(), Layout::ColMajor, |i, j| x.get(p[i], p[j]))
}

fn perm_sign(p: &[usize]) -> f64 {
    let mut seen = vec![false; p.len()];
    let mut s = 1.0;
    for i in 0..p.len() {
        let mut len = 0;
        let mut j = i;
        while !seen[j] {
            seen[j] = true;
            j = p[j];
            len += 1;
        }
        if len > 0 && len % 2 == 0 {
            s = -s;
        }
    }
    s
}

#[test]
fn c07_ltlt_and_pfaffian() {
    criterion(7, "ltlt and pfaffian", 60, || {
        let leaf = ControlNode::unblocked(OpKind::Ltlt, 1);
        let blocked = ControlNode::blocked(OpKind::Ltlt, 1, 8, None);
        let mut r = rng(107);
        for n in [10, 64] {
            let x = skew::<f64>(n, &mut r);
            for tree in [&leaf, &blocked] {
                let f = copy(&x);
                let (piv, t) = ltlt_pivoted(&f, tree).map_err(|e| e.to_string())?;
                let res = cli::ltlt_residual(&x, &f, &piv, &t);
                check(res <= 10.0 * n as f64 * EPS, || format!("(a) n={n} {}: residual {res:e}", tree.descriptor()))?;
            }
        }
        for s in 0..100 {
            let n = [2, 4, 6, 8, 10][s % 5];
            let x = skew::<f64>(n, &mut r);
            let want = pfaffian_combinatorial(&x);
            let got = pfaffian(&copy(&x), &blocked).map_err(|e| e.to_string())?;
            check((got - want).abs() <= 1e-10 * want.abs(), || format!("(b) n={n}: {got} vs {want}"))?;
        }
        for n in [20, 40] {
            let x = skew::<f64>(n, &mut r);
            let pf = pfaffian(&copy(&x), &blocked).map_err(|e| e.to_string())?;
            let det = det_scalar(&x);
            check((pf * pf - det).abs() <= 1e-8 * det.abs(), || format!("(c) n={n}: pf^2 {} vs det {det}", pf * pf))?;
        }
        for n in [2, 3, 4, 5, 6, 7, 8] {
            let x = skew::<f64>(n, &mut r);
            let pf = pfaffian(&copy(&x), &leaf).map_err(|e| e.to_string())?;
            for _ in 0..5 {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut r);
                let pp = pfaffian(&permute_sym(&x, &p), &leaf).map_err(|e| e.to_string())?;
                let want = perm_sign(&p) * pf;
                check((pp - want).abs() <= 1e-12 * pf.abs().max(1.0), || format!("(d) n={n} {p:?}: {pp} vs {want}"))?;
            }
        }
        Ok("(a) (b) (c) (d) hold".into())
    });
}

#[test]
fn c08_fusion() {
    criterion(8, "fused sandwich product", 20, || {
        let cfg = KernelConfig::default_for(DType::F64);
        let mut r = rng(108);
        let mut peak = 0;
        for (n, k) in [(40, 9), (300, 33), (129, 64)] {
            let a = uniform::<f64>(n, k, &mut r);
            let t: Vec<f64> = (0..k - 1).map(|_| r.gen_range(-1.0..1.0)).collect();
            let fused = MatrixView::from_fn(n, n, Layout::ColMajor, |i, j| if i < j { -7.25 } else { (i + 2 * j) as f64 });
            let unfused = copy(&fused);
            let (res, stats) = track_allocations(|| sandwich_skew(&fused, &a, &t, &cfg, 1));
            res.map_err(|e| e.to_string())?;
            let w = MatrixView::from_fn(k, n, Layout::ColMajor, |g, j| {
                let up = if g > 0 { t[g - 1] * a.get(j, g - 1) } else { 0.0 };
                let down = if g + 1 < k { t[g] * a.get(j, g + 1) } else { 0.0 };
                up - down
            });
            gemmt_lower(-1.0, &a, &w, 1.0, &unfused, &cfg, 1).map_err(|e| e.to_string())?;
            let scale = (fused.max_abs()).max(1.0);
            for j in 0..n {
                for i in 0..n {
                    if i < j {
                        check(fused.get(i, j).to_bits() == (-7.25f64).to_bits(), || format!("canary ({i},{j}) changed"))?;
                    } else {
                        let e = (fused.get(i, j) - unfused.get(i, j)).abs();
                        check(e <= 8.0 * k as f64 * EPS * scale, || format!("n={n} k={k} ({i},{j}): {e:e}"))?;
                    }
                }
            }
            let bound = cfg.mc * cfg.kc + cfg.kc * cfg.nc;
            check(stats.peak_elements <= bound, || format!("peak {} > {bound}", stats.peak_elements))?;
            peak = peak.max(stats.peak_elements);
        }
        Ok(format!("peak auxiliary {peak} elements"))
    });
}

/// Random contraction with every rank in 2..=4 and extents in 1..=5.
fn random_spec(r: &mut ChaCha8Rng) -> (ContractionSpec, Vec<usize>) {
    loop {
        let (nm, nn, nk) = (r.gen_range(0..=3), r.gen_range(0..=3), r.gen_range(0..=3));
        let ranks = [nm + nk, nn + nk, nm + nn];
        if ranks.iter().any(|&x| !(2..=4).contains(&x)) {
            continue;
        }
        let labels: Vec<char> = "abcdefghi".chars().take(nm + nn + nk).collect();
        let (ms, rest) = labels.split_at(nm);
        let (ns, ks) = rest.split_at(nn);
        let mut a: Vec<char> = ms.iter().chain(ks).copied().collect();
        let mut b: Vec<char> = ks.iter().chain(ns).copied().collect();
        let mut c: Vec<char> = ms.iter().chain(ns).copied().collect();
        a.shuffle(r);
        b.shuffle(r);
        c.shuffle(r);
        let text = format!(
            "{},{}->{}",
            a.iter().collect::<String>(),
            b.iter().collect::<String>(),
            c.iter().collect::<String>()
        );
        let extents = labels.iter().map(|_| r.gen_range(1..=5)).collect();
        return (text.parse().expect("generated spec is valid"), extents);
    }
}

/// A tensor with the given extents laid out in a random mode order.
fn random_tensor(dims: &[usize], r: &mut ChaCha8Rng) -> TensorView<f64> {
    let mut perm: Vec<usize> = (0..dims.len()).collect();
    perm.shuffle(r);
    let stored: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let n: usize = stored.iter().product();
    let data: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let t = TensorView::from_vec(&stored, data).unwrap();
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    t.permuted(&inv).unwrap()
}

fn naive<'a>(t: &'a TensorView<f64>, flat: &'a MatrixView<f64>) -> NaiveTensor<'a, f64> {
    NaiveTensor { data: flat, offset: t.offset(), dims: t.dims(), strides: t.strides() }
}

#[test]
fn c09_tensor_contraction() {
    criterion(9, "tensor contraction", 60, || {
        let mut r = rng(109);
        let cfg = KernelConfig::default_for(DType::F64);
        let mut worst = 0.0f64;
        for case in 0..100 {
            let (spec, ext) = random_spec(&mut r);
            let dims = |ls: &[char]| ls.iter().map(|&ch| ext[(ch as u8 - b'a') as usize]).collect::<Vec<_>>();
            let a = random_tensor(&dims(&spec.a), &mut r);
            let b = random_tensor(&dims(&spec.b), &mut r);
            let c0 = random_tensor(&dims(&spec.c), &mut r);
            let run = |fold: bool| -> Result<Vec<f64>, String> {
                let c = TensorView::from_fn(c0.dims(), |i| c0.get(i)).unwrap();
                let plan = ContractionPlan::new(&spec, &a, &b, &c, fold).map_err(|e| e.to_string())?;
                contract_planned(1.5, &plan, -0.5, &cfg, 1).map_err(|e| e.to_string())?;
                Ok(c.to_vec())
            };
            let (on, off) = (run(true)?, run(false)?);
            check(on.iter().zip(&off).all(|(x, y)| x.to_bits() == y.to_bits()), || format!("{spec}: fold changes bits"))?;
            let want = TensorView::from_fn(c0.dims(), |i| c0.get(i)).unwrap();
            let (fa, fb, fw) = (a.flat_storage(), b.flat_storage(), want.flat_storage());
            let sc = |v: &[char]| v.iter().collect::<String>();
            contract_naive(1.5, &naive(&a, &fa), &sc(&spec.a), &naive(&b, &fb), &sc(&spec.b), -0.5, &naive(&want, &fw), &sc(&spec.c));
            let kdim: usize = spec.a.iter().filter(|ch| spec.b.contains(ch)).map(|&ch| ext[(ch as u8 - b'a') as usize]).product();
            let tol = 4.0 * kdim as f64 * EPS * 2.0;
            for (g, w) in on.iter().zip(want.to_vec()) {
                let e = (g - w).abs();
                check(e <= tol, || format!("case {case} {spec}: error {e:e} > {tol:e}"))?;
                worst = worst.max(e / tol);
            }
        }
        // exhaustive scatter addressing
        let mut views = 0;
        for _ in 0..200 {
            let rank = r.gen_range(1..=4);
            let dims: Vec<usize> = (0..rank).map(|_| r.gen_range(1..=4)).collect();
            let t = random_tensor(&dims, &mut r);
            let mut modes: Vec<usize> = (0..rank).collect();
            modes.shuffle(&mut r);
            let split = r.gen_range(0..=rank);
            let (rows, cols) = modes.split_at(split);
            let (mr, nr) = (r.gen_range(1..=4), r.gen_range(1..=4));
            let v = block_scatter(&t, rows, cols, mr, nr).map_err(|e| e.to_string())?;
            let mut idx = vec![0; rank];
            for i in 0..v.m {
                for j in 0..v.n {
                    let (mut ri, mut cj) = (i, j);
                    for &md in rows.iter().rev() {
                        idx[md] = ri % dims[md];
                        ri /= dims[md];
                    }
                    for &md in cols.iter().rev() {
                        idx[md] = cj % dims[md];
                        cj /= dims[md];
                    }
                    check(v.addr(i, j) == t.addr(&idx), || format!("dims {dims:?} rows {rows:?}: ({i},{j})"))?;
                }
            }
            for (bs, scat, blk) in [(&v.rbs, &v.rscat, mr), (&v.cbs, &v.cscat, nr)] {
                for (chunk, &s) in scat.chunks(blk).zip(bs.iter()) {
                    if s != 0 {
                        check(chunk.windows(2).all(|w| w[1] - w[0] == s), || format!("block stride {s} wrong for {chunk:?}"))?;
                    }
                }
            }
            views += 1;
        }
        Ok(format!("100 specs, worst error/tol {worst:.3}; {views} scatter views exhaustive"))
    });
}

fn median_time(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut ts: Vec<f64> = (0..reps)
        .map(|_| {
            let t0 = Instant::now();
            f();
            t0.elapsed().as_secs_f64()
        })
        .collect();
    ts.sort_by(f64::total_cmp);
    ts[reps / 2]
}

#[test]
fn c10_performance_sanity() {
    criterion(10, "performance sanity", 120, || {
        let n = 1024;
        let mut r = rng(110);
        let (a, b) = (uniform::<f64>(n, n, &mut r), uniform::<f64>(n, n, &mut r));
        let c = MatrixView::<f64>::zeros(n, n, Layout::ColMajor);
        let cfg = KernelConfig::default_for(DType::F64);
        let blocked = median_time(3, || gemm(1.0, &a, &b, 0.0, &c, &cfg, 1).unwrap());
        let naive = median_time(1, || gemm_naive(1.0, &a, &b, 0.0, &c));
        let s = spd::<f64>(n, &mut r);
        let tb = ControlNode::blocked(OpKind::Cholesky, 3, 128, None);
        let tu = ControlNode::unblocked(OpKind::Cholesky, 3);
        let fresh = || copy(&s);
        let (mut x, mut y) = (fresh(), fresh());
        let chol_b = median_time(3, || {
            x = fresh();
            cholesky(&x, Uplo::Lower, &tb).unwrap();
        });
        let chol_u = median_time(1, || {
            y = fresh();
            cholesky(&y, Uplo::Lower, &tu).unwrap();
        });
        let (gr, cr) = (naive / blocked, chol_u / chol_b);
        let detail = format!(
            "gemm {blocked:.3}s vs naive {naive:.3}s ({gr:.1}x); cholesky bs=128 {chol_b:.3}s vs unblocked {chol_u:.3}s ({cr:.1}x)"
        );
        check(gr >= 10.0 && cr >= 3.0, || detail.clone())?;
        Ok(detail)
    });
}

#[test]
fn c11_cli_sweep() {
    criterion(11, "cli sweep", 60, || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let sweep = |name: &str| -> Result<String, String> {
            let path = dir.path().join(name);
            let args = ["famlies", "sweep", "--op", "cholesky", "--n", "96", "--variants", "1,2,3", "--bs", "64,128", "--depth", "1"];
            let mut args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
            args.extend(["--out".into(), path.display().to_string()]);
            let (mut out, mut err) = (vec![], vec![]);
            let code = cli::run(args, &mut out, &mut err);
            check(code == 0, || format!("exit {code}: {}", String::from_utf8_lossy(&err)))?;
            std::fs::read_to_string(&path).map_err(|e| e.to_string())
        };
        let (first, second) = (sweep("a.csv")?, sweep("b.csv")?);
        let lines: Vec<&str> = first.lines().collect();
        check(lines[0] == HEADER, || format!("header {:?}", lines[0]))?;
        check(lines.len() == 1 + 18, || format!("{} rows, expected 18", lines.len() - 1))?;
        let err_col = |text: &str| -> Vec<String> { text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().to_string()).collect() };
        let (e1, e2) = (err_col(&first), err_col(&second));
        check(e1.iter().all(|e| !e.is_empty()), || "max_rel_err column is empty".into())?;
        check(e1 == e2, || format!("max_rel_err differs between runs: {e1:?} vs {e2:?}"))?;
        Ok("18 rows, exact header, reproducible max_rel_err".into())
    });
}
