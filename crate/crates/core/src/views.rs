//! Strided matrix views over shared element storage, implicit transpose, and
//! the range steppers that drive every blocked algorithm.
//!
//! A [`MatrixView`] is a cheap descriptor `(storage, offset, m, n, rs, cs)`.
//! Sub-views and transposes alias the parent storage; nothing is copied.
//! Storage uses `Cell` elements, so views are single-threaded handles; the
//! engine hands disjoint raw tiles to its worker team internally.

use std::cell::Cell;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::scalar::{DType, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ViewError {
    #[error("element count {m}x{n} overflows the index type")]
    SizeOverflow { m: usize, n: usize },
    #[error("supplied {got} values for a {m}x{n} view")]
    FillLength { m: usize, n: usize, got: usize },
    #[error("range [{start}, {end}) out of bounds for extent {extent}")]
    RangeOutOfBounds {
        start: usize,
        end: usize,
        extent: usize,
    },
    #[error("view footprint exceeds storage of {len} elements")]
    StorageBounds { len: usize },
    #[error("block size must be at least 1")]
    ZeroBlockSize,
}

/// Storage order used when creating fresh views.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    RowMajor,
    ColMajor,
}

/// Initial contents for [`make_view`].
#[derive(Clone, Debug)]
pub enum Fill<T> {
    Zeros,
    /// 1, 2, 3, ... in row-major linear order, independent of layout.
    Sequence,
    /// Values in row-major linear order, independent of layout.
    Values(Vec<T>),
}

/// Shared element buffer.
pub struct Buffer<T> {
    data: Box<[Cell<T>]>,
}

impl<T: Copy> Buffer<T> {
    pub(crate) fn new(data: Vec<T>) -> Self {
        Self {
            data: data.into_iter().map(Cell::new).collect(),
        }
    }

    pub(crate) fn get(&self, i: usize) -> T {
        self.data[i].get()
    }

    pub(crate) fn set(&self, i: usize, v: T) {
        self.data[i].set(v)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

impl<T> Buffer<T> {
    pub(crate) fn as_ptr(&self) -> *mut T {
        // Cell<T> is repr(transparent) over T.
        self.data.as_ptr() as *mut T
    }
}

/// Half-open index interval `[start, start + len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Range {
    pub start: usize,
    pub len: usize,
}

impl Range {
    pub const fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }

    pub const fn span(start: usize, end: usize) -> Self {
        Self {
            start,
            len: end - start,
        }
    }

    pub const fn end(&self) -> usize {
        self.start + self.len
    }

    pub const fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end())
    }
}

/// Strided window into shared storage.
pub struct MatrixView<T> {
    storage: Rc<Buffer<T>>,
    offset: usize,
    m: usize,
    n: usize,
    rs: isize,
    cs: isize,
}

impl<T> Clone for MatrixView<T> {
    fn clone(&self) -> Self {
        Self {
            storage: Rc::clone(&self.storage),
            offset: self.offset,
            m: self.m,
            n: self.n,
            rs: self.rs,
            cs: self.cs,
        }
    }
}

/// Creates a view over fresh storage of `m * n` elements.
pub fn make_view<T: Scalar>(
    m: usize,
    n: usize,
    layout: Layout,
    fill: Fill<T>,
) -> Result<MatrixView<T>, ViewError> {
    let len = m.checked_mul(n).ok_or(ViewError::SizeOverflow { m, n })?;
    if len > isize::MAX as usize / std::mem::size_of::<T>().max(1) {
        return Err(ViewError::SizeOverflow { m, n });
    }
    let (rs, cs) = match layout {
        Layout::RowMajor => (n as isize, 1),
        Layout::ColMajor => (1, m as isize),
    };
    let row_major: Vec<T> = match fill {
        Fill::Zeros => vec![T::zero(); len],
        Fill::Sequence => (1..=len).map(|x| T::from_f64(x as f64)).collect(),
        Fill::Values(v) => {
            if v.len() != len {
                return Err(ViewError::FillLength { m, n, got: v.len() });
            }
            v
        }
    };
    let data = match layout {
        Layout::RowMajor => row_major,
        Layout::ColMajor => {
            let mut d = vec![T::zero(); len];
            for i in 0..m {
                for j in 0..n {
                    d[i + j * m] = row_major[i * n + j];
                }
            }
            d
        }
    };
    Ok(MatrixView {
        storage: Rc::new(Buffer::new(data)),
        offset: 0,
        m,
        n,
        rs,
        cs,
    })
}

impl<T: Scalar> MatrixView<T> {
    pub fn zeros(m: usize, n: usize, layout: Layout) -> Self {
        make_view(m, n, layout, Fill::Zeros).expect("matrix too large")
    }

    pub fn from_rows(rows: &[&[T]]) -> Self {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        let mut v = Vec::with_capacity(m * n);
        for r in rows {
            assert_eq!(r.len(), n, "ragged rows");
            v.extend_from_slice(r);
        }
        make_view(m, n, Layout::RowMajor, Fill::Values(v)).expect("matrix too large")
    }

    pub fn from_fn(m: usize, n: usize, layout: Layout, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let out = Self::zeros(m, n, layout);
        for i in 0..m {
            for j in 0..n {
                out.set(i, j, f(i, j));
            }
        }
        out
    }

    pub fn identity(n: usize, layout: Layout) -> Self {
        Self::from_fn(n, n, layout, |i, j| if i == j { T::one() } else { T::zero() })
    }

    /// Wraps an existing buffer after checking the footprint against it.
    pub fn from_parts(
        storage: Rc<Buffer<T>>,
        offset: usize,
        m: usize,
        n: usize,
        rs: isize,
        cs: isize,
    ) -> Result<Self, ViewError> {
        let v = Self {
            storage,
            offset,
            m,
            n,
            rs,
            cs,
        };
        if m > 0 && n > 0 {
            let len = v.storage.len();
            let corners = [(0, 0), (m - 1, 0), (0, n - 1), (m - 1, n - 1)];
            for (i, j) in corners {
                let a = offset as isize + i as isize * rs + j as isize * cs;
                if a < 0 || a as usize >= len {
                    return Err(ViewError::StorageBounds { len });
                }
            }
        }
        Ok(v)
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn copy_contents(&self, layout: Layout) -> Self {
        Self::from_fn(self.m, self.n, layout, |i, j| self.get(i, j))
    }

    pub fn to_row_major_vec(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.m * self.n);
        for i in 0..self.m {
            for j in 0..self.n {
                v.push(self.get(i, j));
            }
        }
        v
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(i < self.m && j < self.n, "({i},{j}) outside {}x{}", self.m, self.n);
        self.storage.data[self.addr(i, j)].get()
    }

    #[inline]
    pub fn set(&self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.m && j < self.n, "({i},{j}) outside {}x{}", self.m, self.n);
        self.storage.data[self.addr(i, j)].set(v)
    }

    pub fn fill(&self, v: T) {
        for j in 0..self.n {
            for i in 0..self.m {
                self.set(i, j, v);
            }
        }
    }

    pub fn copy_from(&self, src: &MatrixView<T>) {
        assert_eq!((self.m, self.n), (src.m, src.n), "copy_from shape mismatch");
        for i in 0..self.m {
            for j in 0..self.n {
                self.set(i, j, src.get(i, j));
            }
        }
    }

    pub fn swap_rows(&self, r1: usize, r2: usize) {
        if r1 == r2 {
            return;
        }
        for j in 0..self.n {
            let a = self.get(r1, j);
            self.set(r1, j, self.get(r2, j));
            self.set(r2, j, a);
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.m {
            for j in 0..self.n {
                let x = self.get(i, j).to_f64();
                s += x * x;
            }
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let mut s = 0.0f64;
        for i in 0..self.m {
            for j in 0..self.n {
                s = s.max(self.get(i, j).to_f64().abs());
            }
        }
        s
    }

    /// Bitwise equality of the visible elements.
    pub fn bit_eq(&self, other: &MatrixView<T>) -> bool {
        self.shape() == other.shape()
            && (0..self.m).all(|i| {
                (0..self.n).all(|j| self.get(i, j).to_f64().to_bits() == other.get(i, j).to_f64().to_bits())
            })
    }
}

impl<T> MatrixView<T> {
    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn row_stride(&self) -> isize {
        self.rs
    }

    pub fn col_stride(&self) -> isize {
        self.cs
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0 || self.n == 0
    }

    pub fn storage(&self) -> &Rc<Buffer<T>> {
        &self.storage
    }

    /// True when both views address the same buffer.
    pub fn same_storage(&self, other: &MatrixView<T>) -> bool {
        Rc::ptr_eq(&self.storage, &other.storage)
    }

    /// Linear element index of `(i, j)` in the storage buffer.
    #[inline(always)]
    pub fn addr(&self, i: usize, j: usize) -> usize {
        (self.offset as isize + i as isize * self.rs + j as isize * self.cs) as usize
    }

    /// Aliasing sub-view. Errors when a range leaves the view.
    pub fn subview(&self, rows: Range, cols: Range) -> Result<Self, ViewError> {
        for (r, extent) in [(rows, self.m), (cols, self.n)] {
            if r.end() > extent {
                return Err(ViewError::RangeOutOfBounds {
                    start: r.start,
                    end: r.end(),
                    extent,
                });
            }
        }
        let offset = if rows.is_empty() || cols.is_empty() {
            self.offset
        } else {
            self.addr(rows.start, cols.start)
        };
        Ok(Self {
            storage: Rc::clone(&self.storage),
            offset,
            m: rows.len,
            n: cols.len,
            rs: self.rs,
            cs: self.cs,
        })
    }

    /// Panicking form of [`subview`](Self::subview) for algorithm code whose
    /// ranges come from a partition stepper.
    #[track_caller]
    pub fn part(&self, rows: Range, cols: Range) -> Self {
        match self.subview(rows, cols) {
            Ok(v) => v,
            Err(e) => panic!("{e}"),
        }
    }

    /// Implicit transpose: swaps extents and strides.
    pub fn transposed(&self) -> Self {
        Self {
            storage: Rc::clone(&self.storage),
            offset: self.offset,
            m: self.n,
            n: self.m,
            rs: self.cs,
            cs: self.rs,
        }
    }

    /// Base pointer of the shared buffer for engine internals.
    pub(crate) fn buffer_ptr(&self) -> *mut T {
        self.storage.as_ptr()
    }
}

impl<T: Scalar> fmt::Debug for MatrixView<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "MatrixView {}x{} (offset {}, rs {}, cs {})",
            self.m, self.n, self.offset, self.rs, self.cs
        )?;
        for i in 0..self.m.min(12) {
            let row: Vec<String> = (0..self.n.min(12)).map(|j| format!("{:>10.4}", self.get(i, j))).collect();
            writeln!(f, "  [{}]", row.join(" "))?;
        }
        Ok(())
    }
}

/// One repartitioning step: `r0` processed, `r1` active, `r2` remainder, and
/// an optional lookahead range `r1b` at the head of `r2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PartitionStep {
    pub r0: Range,
    pub r1: Range,
    pub r2: Range,
    pub r1b: Option<Range>,
}

/// Iterator over the steps of a blocked traversal of `[0, n)`.
#[derive(Clone, Debug)]
pub struct PartitionSteps {
    n: usize,
    bs: usize,
    lookahead: usize,
    done: usize,
}

/// Steps over `[0, n)` in blocks of `bs`; terminates once the active range
/// would be empty. `lookahead > 0` also exposes the first
/// `min(lookahead, r2.len)` indices of the remainder.
pub fn partition_steps(n: usize, bs: usize, lookahead: usize) -> Result<PartitionSteps, ViewError> {
    if bs == 0 {
        return Err(ViewError::ZeroBlockSize);
    }
    Ok(PartitionSteps {
        n,
        bs,
        lookahead,
        done: 0,
    })
}

impl Iterator for PartitionSteps {
    type Item = PartitionStep;

    fn next(&mut self) -> Option<PartitionStep> {
        if self.done >= self.n {
            return None;
        }
        let b = self.bs.min(self.n - self.done);
        let r0 = Range::new(0, self.done);
        let r1 = Range::new(self.done, b);
        let r2 = Range::span(r1.end(), self.n);
        let r1b = (self.lookahead > 0).then(|| Range::new(r2.start, self.lookahead.min(r2.len)));
        self.done += b;
        Some(PartitionStep { r0, r1, r2, r1b })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.n - self.done).div_ceil(self.bs);
        (left, Some(left))
    }
}

impl ExactSizeIterator for PartitionSteps {}
