use std::collections::HashSet;

use crate::views::MatrixView;

/// True when some element is addressed by both views.
pub(crate) fn views_overlap<T>(x: &MatrixView<T>, y: &MatrixView<T>) -> bool {
    if !x.same_storage(y) || x.is_empty() || y.is_empty() {
        return false;
    }
    let (lo_x, hi_x) = footprint(x);
    let (lo_y, hi_y) = footprint(y);
    if hi_x < lo_y || hi_y < lo_x {
        return false;
    }
    let (rs, cs) = (x.row_stride(), x.col_stride());
    if (rs, cs) == (y.row_stride(), y.col_stride()) && rs > 0 && cs > 0 {
        // Solve di*rs + dj*cs = d with di in (-my, mx), dj in (-ny, nx).
        let d = y.offset() as isize - x.offset() as isize;
        let (mx, nx) = (x.rows() as isize, x.cols() as isize);
        let (my, ny) = (y.rows() as isize, y.cols() as isize);
        let (outer, inner, o_lo, o_hi, i_lo, i_hi) = if mx + my <= nx + ny {
            (rs, cs, -(my - 1), mx - 1, -(ny - 1), nx - 1)
        } else {
            (cs, rs, -(ny - 1), nx - 1, -(my - 1), mx - 1)
        };
        return (o_lo..=o_hi).any(|a| {
            let rem = d - a * outer;
            rem % inner == 0 && (i_lo..=i_hi).contains(&(rem / inner))
        });
    }
    let (small, big) = if x.rows() * x.cols() <= y.rows() * y.cols() {
        (x, y)
    } else {
        (y, x)
    };
    let set: HashSet<usize> = (0..small.rows())
        .flat_map(|i| (0..small.cols()).map(move |j| small.addr(i, j)))
        .collect();
    (0..big.rows()).any(|i| (0..big.cols()).any(|j| set.contains(&big.addr(i, j))))
}

fn footprint<T>(v: &MatrixView<T>) -> (isize, isize) {
    let o = v.offset() as isize;
    let di = (v.rows() as isize - 1) * v.row_stride();
    let dj = (v.cols() as isize - 1) * v.col_stride();
    (o + di.min(0) + dj.min(0), o + di.max(0) + dj.max(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::views::{Layout, Range};

    fn brute<T>(x: &MatrixView<T>, y: &MatrixView<T>) -> bool {
        let a: HashSet<usize> = (0..x.rows())
            .flat_map(|i| (0..x.cols()).map(move |j| x.addr(i, j)))
            .collect();
        x.same_storage(y) && (0..y.rows()).any(|i| (0..y.cols()).any(|j| a.contains(&y.addr(i, j))))
    }

    #[test]
    fn matches_brute_force_on_subblocks() {
        for layout in [Layout::RowMajor, Layout::ColMajor] {
            let a = MatrixView::<f64>::zeros(7, 6, layout);
            let ranges: Vec<Range> = (0..=4)
                .flat_map(|s| (0..=3).map(move |l| Range::new(s, l)))
                .filter(|r| r.end() <= 6)
                .collect();
            for &r1 in &ranges {
                for &c1 in &ranges {
                    let x = a.part(r1, c1);
                    for &(r2, c2) in &[(Range::new(2, 3), Range::new(1, 2)), (Range::new(0, 7), Range::new(5, 1))] {
                        let y = a.part(r2, c2);
                        assert_eq!(views_overlap(&x, &y), brute(&x, &y), "{r1} {c1} vs {r2} {c2}");
                        let yt = y.transposed();
                        assert_eq!(views_overlap(&x, &yt), brute(&x, &yt));
                    }
                }
            }
        }
    }

    #[test]
    fn distinct_storage_never_overlaps() {
        let a = MatrixView::<f64>::zeros(3, 3, Layout::RowMajor);
        let b = MatrixView::<f64>::zeros(3, 3, Layout::RowMajor);
        assert!(!views_overlap(&a, &b));
        assert!(views_overlap(&a, &a.clone()));
    }
}
