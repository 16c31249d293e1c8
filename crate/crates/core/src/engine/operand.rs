//! Raw element addressing shared by packing and the micro-tile store.
//!
//! An operand is a base pointer plus one [`AxisMap`] per dimension. Strided
//! matrices use `Strided` on both axes; block-scatter tensor views use
//! `Scatter` with their offset vectors and per-block stride summaries.

use crate::views::MatrixView;

use super::EngineError;

#[derive(Clone, Copy, Debug)]
pub(crate) enum AxisMap<'a> {
    Strided(isize),
    Scatter {
        offsets: &'a [isize],
        /// Common stride of each `block`-sized chunk of `offsets`, 0 if none.
        block_strides: &'a [isize],
        block: usize,
    },
}

impl AxisMap<'_> {
    #[inline(always)]
    pub(crate) fn offset(&self, i: usize) -> isize {
        match *self {
            AxisMap::Strided(s) => i as isize * s,
            AxisMap::Scatter { offsets, .. } => offsets[i],
        }
    }

    /// Fills `out[..len]` with offsets `start..start+len`. Uses the
    /// arithmetic form whenever the range has a known common stride.
    #[inline]
    pub(crate) fn offsets_into(&self, start: usize, len: usize, out: &mut [isize]) {
        match *self {
            AxisMap::Strided(s) => {
                for (ii, o) in out[..len].iter_mut().enumerate() {
                    *o = (start + ii) as isize * s;
                }
            }
            AxisMap::Scatter {
                offsets,
                block_strides,
                block,
            } => {
                let stride = (start.is_multiple_of(block) && len <= block)
                    .then(|| block_strides[start / block])
                    .filter(|&s| s != 0);
                match stride {
                    Some(s) => {
                        let o0 = offsets[start];
                        for (ii, o) in out[..len].iter_mut().enumerate() {
                            *o = o0 + ii as isize * s;
                        }
                    }
                    None => out[..len].copy_from_slice(&offsets[start..start + len]),
                }
            }
        }
    }
}

/// Read-only operand: element `(i, j)` lives at `ptr + base + rows(i) + cols(j)`.
#[derive(Clone, Copy)]
pub(crate) struct Operand<'a, T> {
    pub ptr: *const T,
    pub base: isize,
    pub m: usize,
    pub n: usize,
    pub rows: AxisMap<'a>,
    pub cols: AxisMap<'a>,
}

// SAFETY: operands are only read during engine calls; callers guarantee that
// no element reachable through an operand is written concurrently.
unsafe impl<T: Sync> Sync for Operand<'_, T> {}
unsafe impl<T: Sync> Send for Operand<'_, T> {}

impl<'a, T> Operand<'a, T> {
    pub(crate) fn from_view(v: &MatrixView<T>) -> Result<Self, EngineError> {
        if v.row_stride() < 0 || v.col_stride() < 0 {
            return Err(EngineError::NegativeStride);
        }
        Ok(Self {
            ptr: v.buffer_ptr(),
            base: v.offset() as isize,
            m: v.rows(),
            n: v.cols(),
            rows: AxisMap::Strided(v.row_stride()),
            cols: AxisMap::Strided(v.col_stride()),
        })
    }

    pub(crate) fn transposed(self) -> Self {
        Self {
            m: self.n,
            n: self.m,
            rows: self.cols,
            cols: self.rows,
            ..self
        }
    }
}

impl<T: Copy> Operand<'_, T> {
    #[inline(always)]
    pub(crate) unsafe fn load(&self, off: isize) -> T {
        *self.ptr.offset(self.base + off)
    }
}

/// Writable operand with the same addressing as [`Operand`].
#[derive(Clone, Copy)]
pub(crate) struct OutOperand<'a, T> {
    pub ptr: *mut T,
    pub base: isize,
    pub m: usize,
    pub n: usize,
    pub rows: AxisMap<'a>,
    pub cols: AxisMap<'a>,
}

// SAFETY: the engine partitions C so that each element is written by exactly
// one worker.
unsafe impl<T: Send> Sync for OutOperand<'_, T> {}
unsafe impl<T: Send> Send for OutOperand<'_, T> {}

impl<T> OutOperand<'_, T> {
    pub(crate) fn from_view(v: &MatrixView<T>) -> Result<Self, EngineError> {
        if v.row_stride() < 0 || v.col_stride() < 0 {
            return Err(EngineError::NegativeStride);
        }
        Ok(Self {
            ptr: v.buffer_ptr(),
            base: v.offset() as isize,
            m: v.rows(),
            n: v.cols(),
            rows: AxisMap::Strided(v.row_stride()),
            cols: AxisMap::Strided(v.col_stride()),
        })
    }

    #[inline(always)]
    pub(crate) unsafe fn elem(&self, i: usize, j: usize) -> *mut T {
        self.ptr
            .offset(self.base + self.rows.offset(i) + self.cols.offset(j))
    }
}
