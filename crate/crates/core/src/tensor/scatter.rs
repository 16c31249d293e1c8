use crate::engine::AxisMap;
use crate::scalar::Scalar;

use super::{TensorError, TensorView};

/// Matrix facade over a tensor: element `(i, j)` lives at
/// `offset + rscat[i] + cscat[j]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockScatterView {
    pub m: usize,
    pub n: usize,
    pub offset: usize,
    pub rscat: Vec<isize>,
    pub cscat: Vec<isize>,
    /// Common stride inside each `mr`-chunk of `rscat`, 0 if not affine.
    pub rbs: Vec<isize>,
    pub cbs: Vec<isize>,
    pub mr: usize,
    pub nr: usize,
}

impl BlockScatterView {
    pub fn addr(&self, i: usize, j: usize) -> usize {
        (self.offset as isize + self.rscat[i] + self.cscat[j]) as usize
    }

    pub(crate) fn row_map(&self) -> AxisMap<'_> {
        AxisMap::Scatter { offsets: &self.rscat, block_strides: &self.rbs, block: self.mr }
    }

    pub(crate) fn col_map(&self) -> AxisMap<'_> {
        AxisMap::Scatter { offsets: &self.cscat, block_strides: &self.cbs, block: self.nr }
    }
}

/// Offsets of every multi-index over `modes`, last mode fastest.
fn scatter_vector(dims: &[usize], strides: &[usize], modes: &[usize]) -> Vec<isize> {
    let mut out = vec![0isize];
    for &m in modes {
        let (d, s) = (dims[m], strides[m] as isize);
        out = out.iter().flat_map(|&o| (0..d).map(move |i| o + i as isize * s)).collect();
    }
    out
}

fn block_strides(offsets: &[isize], block: usize, fallback: isize) -> Vec<isize> {
    offsets
        .chunks(block)
        .map(|c| {
            if c.len() < 2 {
                return fallback;
            }
            let s = c[1] - c[0];
            if c.windows(2).all(|w| w[1] - w[0] == s) {
                s
            } else {
                0
            }
        })
        .collect()
}

/// A single-element block takes the stride of the fastest non-trivial mode.
fn fastest_stride(dims: &[usize], strides: &[usize], modes: &[usize]) -> isize {
    modes
        .iter()
        .rev()
        .find(|&&m| dims[m] > 1)
        .map_or(0, |&m| strides[m] as isize)
}

pub fn block_scatter<T: Scalar>(
    t: &TensorView<T>,
    row_modes: &[usize],
    col_modes: &[usize],
    mr: usize,
    nr: usize,
) -> Result<BlockScatterView, TensorError> {
    let rank = t.rank();
    let bad = |reason: String| Err(TensorError::Modes { rank, reason });
    if mr == 0 || nr == 0 {
        return bad("block sizes must be positive".into());
    }
    let mut seen = vec![false; rank];
    for &m in row_modes.iter().chain(col_modes) {
        if m >= rank {
            return bad(format!("mode {m} does not exist"));
        }
        if std::mem::replace(&mut seen[m], true) {
            return bad(format!("mode {m} listed twice"));
        }
    }
    if let Some(m) = seen.iter().position(|s| !s) {
        return bad(format!("mode {m} is in neither list"));
    }
    let (dims, strides) = (t.dims(), t.strides());
    let rscat = scatter_vector(dims, strides, row_modes);
    let cscat = scatter_vector(dims, strides, col_modes);
    let (m, n): (usize, usize) = (
        row_modes.iter().map(|&i| dims[i]).product(),
        col_modes.iter().map(|&i| dims[i]).product(),
    );
    Ok(BlockScatterView {
        m,
        n,
        offset: t.offset(),
        rbs: block_strides(&rscat, mr, fastest_stride(dims, strides, row_modes)),
        cbs: block_strides(&cscat, nr, fastest_stride(dims, strides, col_modes)),
        rscat,
        cscat,
        mr,
        nr,
    })
}
