use std::fmt;
use std::str::FromStr;

use crate::engine::{run_product, GemmArgs, KernelConfig, Operand, OutOperand, Region};
use crate::scalar::Scalar;

use super::scatter::{block_scatter, BlockScatterView};
use super::{self_overlapping, tensors_overlap, TensorError, TensorView};

/// Einsum-style contraction `labels_a,labels_b->labels_c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionSpec {
    pub a: Vec<char>,
    pub b: Vec<char>,
    pub c: Vec<char>,
}

impl FromStr for ContractionSpec {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, TensorError> {
        let bad = |reason: &str| TensorError::Spec { spec: s.to_string(), reason: reason.to_string() };
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (lhs, c) = compact.split_once("->").ok_or_else(|| bad("missing `->`"))?;
        let (a, b) = lhs.split_once(',').ok_or_else(|| bad("expected two inputs separated by `,`"))?;
        let spec = Self {
            a: a.chars().collect(),
            b: b.chars().collect(),
            c: c.chars().collect(),
        };
        spec.check().map_err(|r| bad(&r))?;
        Ok(spec)
    }
}

impl fmt::Display for ContractionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |v: &[char]| v.iter().collect::<String>();
        write!(f, "{},{}->{}", s(&self.a), s(&self.b), s(&self.c))
    }
}

impl ContractionSpec {
    fn check(&self) -> Result<(), String> {
        for (name, labels) in [('a', &self.a), ('b', &self.b), ('c', &self.c)] {
            if labels.len() > super::MAX_RANK {
                return Err(format!("operand {name} has more than {} labels", super::MAX_RANK));
            }
            for (i, ch) in labels.iter().enumerate() {
                if !ch.is_ascii_lowercase() {
                    return Err(format!("label `{ch}` is not in a-z"));
                }
                if labels[..i].contains(ch) {
                    return Err(format!("label `{ch}` repeated in operand {name}"));
                }
            }
        }
        for ch in self.a.iter().chain(&self.b).chain(&self.c) {
            let (ia, ib, ic) = (self.a.contains(ch), self.b.contains(ch), self.c.contains(ch));
            match (ia, ib, ic) {
                (true, true, true) => return Err(format!("label `{ch}` appears in all three operands")),
                (false, false, true) => return Err(format!("output label `{ch}` appears in no input")),
                (true, false, false) | (false, true, false) => {
                    return Err(format!("label `{ch}` appears in one input only and not in the output"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Adjacent modes merged into one matrix index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeGroup {
    pub labels: Vec<char>,
    pub dim: usize,
}

/// Mode classification and the folded operands of a contraction.
#[derive(Clone)]
pub struct ContractionPlan<T> {
    pub spec: ContractionSpec,
    pub m: Vec<ModeGroup>,
    pub n: Vec<ModeGroup>,
    pub k: Vec<ModeGroup>,
    a: TensorView<T>,
    b: TensorView<T>,
    c: TensorView<T>,
}

struct Mode {
    labels: Vec<char>,
    dim: usize,
    /// Stride in each of the two operands carrying the mode.
    strides: [usize; 2],
}

fn position(labels: &[char], ch: char) -> usize {
    labels.iter().position(|&c| c == ch).expect("label present")
}

/// Modes `set` ordered slowest first by their stride in `order_by`, then
/// folded where both carrying operands are contiguous across the pair.
fn group(
    set: &[char],
    ops: [(&[char], &[usize], &[usize]); 2],
    order_index: usize,
    fold: bool,
) -> Vec<Mode> {
    let mut modes: Vec<Mode> = set
        .iter()
        .map(|&ch| {
            let (la, da, sa) = ops[0];
            let (lb, _, sb) = ops[1];
            Mode {
                labels: vec![ch],
                dim: da[position(la, ch)],
                strides: [sa[position(la, ch)], sb[position(lb, ch)]],
            }
        })
        .collect();
    modes.sort_by(|x, y| y.strides[order_index].cmp(&x.strides[order_index]));
    if !fold {
        return modes;
    }
    let mut out: Vec<Mode> = vec![];
    for q in modes {
        if let Some(p) = out.last_mut() {
            if q.dim == 1 {
                p.labels.extend(q.labels);
                continue;
            }
            if p.dim == 1 || (0..2).all(|o| p.strides[o] == q.strides[o] * q.dim) {
                p.labels.extend(q.labels);
                p.dim *= q.dim;
                p.strides = q.strides;
                continue;
            }
        }
        out.push(q);
    }
    out
}

fn folded<T: Scalar>(t: &TensorView<T>, groups: [(&[Mode], usize); 2]) -> Result<TensorView<T>, TensorError> {
    let mut dims = vec![];
    let mut strides = vec![];
    for (modes, which) in groups {
        for m in modes {
            dims.push(m.dim);
            strides.push(m.strides[which]);
        }
    }
    TensorView::from_parts(std::rc::Rc::clone(t.storage()), t.offset(), &dims, &strides)
}

fn op<'a, T: Scalar>(labels: &'a [char], t: &'a TensorView<T>) -> (&'a [char], &'a [usize], &'a [usize]) {
    (labels, t.dims(), t.strides())
}

fn public(modes: &[Mode]) -> Vec<ModeGroup> {
    modes.iter().map(|m| ModeGroup { labels: m.labels.clone(), dim: m.dim }).collect()
}

impl<T: Scalar> ContractionPlan<T> {
    /// Classifies labels into M (a and c), N (b and c) and K (a and b),
    /// orders M and N by the memory order of `c` and K by that of `a`, and
    /// optionally folds adjacent modes.
    pub fn new(
        spec: &ContractionSpec,
        a: &TensorView<T>,
        b: &TensorView<T>,
        c: &TensorView<T>,
        fold: bool,
    ) -> Result<Self, TensorError> {
        for (name, labels, t) in [('a', &spec.a, a), ('b', &spec.b, b), ('c', &spec.c, c)] {
            if labels.len() != t.rank() {
                return Err(TensorError::LabelCount { operand: name, rank: t.rank(), labels: labels.len() });
            }
        }
        let extent = |labels: &[char], t: &TensorView<T>, ch: char| t.dims()[position(labels, ch)];
        for (la, ta) in [(&spec.a, a), (&spec.b, b)] {
            for (lb, tb) in [(&spec.b, b), (&spec.c, c)] {
                for &ch in la.iter().filter(|ch| lb.contains(ch)) {
                    let (first, second) = (extent(la, ta, ch), extent(lb, tb, ch));
                    if first != second {
                        return Err(TensorError::Extent { label: ch, first, second });
                    }
                }
            }
        }
        let m_set: Vec<char> = spec.c.iter().copied().filter(|ch| spec.a.contains(ch)).collect();
        let n_set: Vec<char> = spec.c.iter().copied().filter(|ch| spec.b.contains(ch)).collect();
        let k_set: Vec<char> = spec.a.iter().copied().filter(|ch| spec.b.contains(ch)).collect();
        // strides[0] is the operand listed first
        let m = group(&m_set, [op(&spec.a, a), op(&spec.c, c)], 1, fold);
        let n = group(&n_set, [op(&spec.b, b), op(&spec.c, c)], 1, fold);
        let k = group(&k_set, [op(&spec.a, a), op(&spec.b, b)], 0, fold);
        Ok(Self {
            spec: spec.clone(),
            a: folded(a, [(&m, 0), (&k, 0)])?,
            b: folded(b, [(&k, 1), (&n, 0)])?,
            c: folded(c, [(&m, 1), (&n, 1)])?,
            m: public(&m),
            n: public(&n),
            k: public(&k),
        })
    }

    /// Block-scatter views of `a` (M x K), `b` (K x N) and `c` (M x N).
    pub fn views(&self, mr: usize, nr: usize) -> Result<[BlockScatterView; 3], TensorError> {
        let (nm, nn, nk) = (self.m.len(), self.n.len(), self.k.len());
        let r = |lo: usize, len: usize| (lo..lo + len).collect::<Vec<_>>();
        Ok([
            block_scatter(&self.a, &r(0, nm), &r(nm, nk), mr, nr)?,
            block_scatter(&self.b, &r(0, nk), &r(nk, nn), mr, nr)?,
            block_scatter(&self.c, &r(0, nm), &r(nm, nn), mr, nr)?,
        ])
    }

    /// Matrix dimensions `(m, n, k)` of the equivalent product.
    pub fn gemm_dims(&self) -> (usize, usize, usize) {
        let p = |g: &[ModeGroup]| g.iter().map(|m| m.dim).product();
        (p(&self.m), p(&self.n), p(&self.k))
    }
}

pub fn plan_contraction<T: Scalar>(
    spec: &ContractionSpec,
    a: &TensorView<T>,
    b: &TensorView<T>,
    c: &TensorView<T>,
) -> Result<ContractionPlan<T>, TensorError> {
    ContractionPlan::new(spec, a, b, c, true)
}

/// `c := beta * c + alpha * contraction(a, b)`.
#[allow(clippy::too_many_arguments)]
pub fn contract<T: Scalar>(
    alpha: T,
    a: &TensorView<T>,
    b: &TensorView<T>,
    beta: T,
    c: &TensorView<T>,
    spec: &ContractionSpec,
    cfg: &KernelConfig,
    ways: usize,
) -> Result<(), TensorError> {
    let plan = plan_contraction(spec, a, b, c)?;
    contract_planned(alpha, &plan, beta, cfg, ways)
}

/// Runs a plan as one engine product; packing reads through the scatter
/// vectors and the micro-tile is stored through those of `c`.
pub fn contract_planned<T: Scalar>(
    alpha: T,
    plan: &ContractionPlan<T>,
    beta: T,
    cfg: &KernelConfig,
    ways: usize,
) -> Result<(), TensorError> {
    let (a, b, c) = (&plan.a, &plan.b, &plan.c);
    if tensors_overlap(c, a) || tensors_overlap(c, b) || self_overlapping(c) {
        return Err(TensorError::Aliasing);
    }
    let [va, vb, vc] = plan.views(cfg.mr, cfg.nr)?;
    let args = GemmArgs {
        a: Operand {
            ptr: a.storage().as_ptr(),
            base: a.offset() as isize,
            m: va.m,
            n: va.n,
            rows: va.row_map(),
            cols: va.col_map(),
        },
        b: Operand {
            ptr: b.storage().as_ptr(),
            base: b.offset() as isize,
            m: vb.m,
            n: vb.n,
            rows: vb.row_map(),
            cols: vb.col_map(),
        },
        c: OutOperand {
            ptr: c.storage().as_ptr(),
            base: c.offset() as isize,
            m: vc.m,
            n: vc.n,
            rows: vc.row_map(),
            cols: vc.col_map(),
        },
        tridiag: None,
        region: Region::Full,
    };
    run_product(alpha, beta, &args, cfg, ways)?;
    Ok(())
}
