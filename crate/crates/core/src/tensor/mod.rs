//! Dense tensor views, block-scatter matricization, and contraction through
//! the matrix engine.
//!
//! Multi-indices are linearized with the last listed mode fastest.

mod contract;
mod scatter;

use std::collections::HashSet;
use std::rc::Rc;

use thiserror::Error;

use crate::engine::EngineError;
use crate::scalar::Scalar;
use crate::views::{Buffer, MatrixView};

pub use contract::{contract, contract_planned, plan_contraction, ContractionPlan, ContractionSpec, ModeGroup};
pub use scatter::{block_scatter, BlockScatterView};

pub const MAX_RANK: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("rank {0} exceeds the maximum of {MAX_RANK}")]
    Rank(usize),
    #[error("{dims} dims but {strides} strides")]
    StrideCount { dims: usize, strides: usize },
    #[error("tensor addresses up to {max} but storage holds {len} elements")]
    Bounds { max: usize, len: usize },
    #[error("data has {got} elements, dims need {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("bad contraction spec `{spec}`: {reason}")]
    Spec { spec: String, reason: String },
    #[error("mode lists do not partition the {rank} modes: {reason}")]
    Modes { rank: usize, reason: String },
    #[error("label `{label}` has extent {first} in one operand and {second} in another")]
    Extent { label: char, first: usize, second: usize },
    #[error("operand `{operand}` has rank {rank} but the spec lists {labels} labels")]
    LabelCount { operand: char, rank: usize, labels: usize },
    #[error("output tensor overlaps an input or itself")]
    Aliasing,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Strided view of a rank-`r` tensor over shared storage.
#[derive(Clone)]
pub struct TensorView<T> {
    storage: Rc<Buffer<T>>,
    offset: usize,
    dims: Vec<usize>,
    strides: Vec<usize>,
}

fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

impl<T: Scalar> TensorView<T> {
    pub fn zeros(dims: &[usize]) -> Result<Self, TensorError> {
        Self::from_vec(dims, vec![T::zero(); dims.iter().product()])
    }

    /// Row-major data.
    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self, TensorError> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(TensorError::DataLength { expected, got: data.len() });
        }
        Self::from_parts(Rc::new(Buffer::new(data)), 0, dims, &row_major_strides(dims))
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Result<Self, TensorError> {
        let t = Self::zeros(dims)?;
        t.for_each_index(|idx| t.set(idx, f(idx)));
        Ok(t)
    }

    pub fn from_parts(
        storage: Rc<Buffer<T>>,
        offset: usize,
        dims: &[usize],
        strides: &[usize],
    ) -> Result<Self, TensorError> {
        if dims.len() > MAX_RANK {
            return Err(TensorError::Rank(dims.len()));
        }
        if dims.len() != strides.len() {
            return Err(TensorError::StrideCount { dims: dims.len(), strides: strides.len() });
        }
        if dims.iter().all(|&d| d > 0) {
            let max = offset + dims.iter().zip(strides).map(|(d, s)| (d - 1) * s).sum::<usize>();
            if max >= storage.len() {
                return Err(TensorError::Bounds { max, len: storage.len() });
            }
        }
        Ok(Self {
            storage,
            offset,
            dims: dims.to_vec(),
            strides: strides.to_vec(),
        })
    }

    /// Rank-2 view sharing the matrix's storage.
    pub fn from_matrix(m: &MatrixView<T>) -> Result<Self, TensorError> {
        let (rs, cs) = (m.row_stride(), m.col_stride());
        if rs < 0 || cs < 0 {
            return Err(TensorError::Engine(EngineError::NegativeStride));
        }
        Self::from_parts(Rc::clone(m.storage()), m.offset(), &[m.rows(), m.cols()], &[rs as usize, cs as usize])
    }

    /// Same elements with modes reordered: new mode `i` is old mode `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, TensorError> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::Modes { rank: r, reason: format!("{perm:?} is not a permutation") });
        }
        Ok(Self {
            storage: Rc::clone(&self.storage),
            offset: self.offset,
            dims: perm.iter().map(|&p| self.dims[p]).collect(),
            strides: perm.iter().map(|&p| self.strides[p]).collect(),
        })
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn storage(&self) -> &Rc<Buffer<T>> {
        &self.storage
    }

    pub fn addr(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.rank(), "index rank");
        self.offset
            + idx
                .iter()
                .zip(&self.dims)
                .zip(&self.strides)
                .map(|((&i, &d), &s)| {
                    assert!(i < d, "index {i} out of bounds for extent {d}");
                    i * s
                })
                .sum::<usize>()
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.storage.get(self.addr(idx))
    }

    pub fn set(&self, idx: &[usize], v: T) {
        self.storage.set(self.addr(idx), v)
    }

    /// Visits every multi-index, last mode fastest.
    pub fn for_each_index(&self, mut f: impl FnMut(&[usize])) {
        if self.is_empty() {
            return;
        }
        let r = self.rank();
        let mut idx = vec![0; r];
        loop {
            f(&idx);
            let mut m = r;
            loop {
                if m == 0 {
                    return;
                }
                m -= 1;
                idx[m] += 1;
                if idx[m] < self.dims[m] {
                    break;
                }
                idx[m] = 0;
            }
        }
    }

    /// Elements in row-major multi-index order.
    pub fn to_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_index(|idx| out.push(self.get(idx)));
        out
    }

    /// The whole storage as a `1 x len` matrix, for address-level access.
    pub fn flat_storage(&self) -> MatrixView<T> {
        let len = self.storage.len();
        MatrixView::from_parts(Rc::clone(&self.storage), 0, 1, len, len.max(1) as isize, 1)
            .expect("full-storage view is in bounds")
    }

    pub(crate) fn addresses(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_index(|idx| out.push(self.addr(idx)));
        out
    }
}

/// True when some element of `x` is also addressed by `y`.
pub(crate) fn tensors_overlap<T: Scalar>(x: &TensorView<T>, y: &TensorView<T>) -> bool {
    if !Rc::ptr_eq(&x.storage, &y.storage) {
        return false;
    }
    let set: HashSet<usize> = x.addresses().into_iter().collect();
    y.addresses().into_iter().any(|a| set.contains(&a))
}

/// True when two multi-indices of `x` share an address.
pub(crate) fn self_overlapping<T: Scalar>(x: &TensorView<T>) -> bool {
    let mut set = HashSet::with_capacity(x.len());
    !x.addresses().into_iter().all(|a| set.insert(a))
}
