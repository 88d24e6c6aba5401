//! Dense row reduction over an exact (or float) scalar.
//!
//! Symbol matrices at desk scale are small, so a plain Gauss-Jordan with
//! pivot-weight selection is all that is needed.  Over rationals the reduced
//! row-echelon form is canonical, which makes row-space comparison a matrix
//! equality.

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T: Scalar> {
    pub rows: Vec<Vec<T>>,
    pub cols: usize,
}

impl<T: Scalar> Mat<T> {
    pub fn new(rows: Vec<Vec<T>>, cols: usize) -> Self {
        for r in &rows {
            assert_eq!(r.len(), cols);
        }
        Mat { rows, cols }
    }

    pub fn zero(nrows: usize, ncols: usize) -> Self {
        Mat {
            rows: vec![vec![T::zero(); ncols]; nrows],
            cols: ncols,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    /// In-place reduction to reduced row-echelon form with columns processed
    /// left to right.  Returns the pivot column of each pivot row, in order.
    pub fn rref(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..self.cols {
            if row >= self.rows.len() {
                break;
            }
            // best pivot by weight
            let mut best: Option<(usize, f64)> = None;
            for (i, r) in self.rows.iter().enumerate().skip(row) {
                if !r[col].is_zero() {
                    let w = r[col].pivot_weight();
                    if best.is_none_or(|(_, bw)| w > bw) {
                        best = Some((i, w));
                    }
                }
            }
            let Some((i, _)) = best else { continue };
            self.rows.swap(row, i);
            let inv = T::one() / self.rows[row][col].clone();
            for v in self.rows[row].iter_mut() {
                if !v.is_zero() {
                    *v = v.clone() * inv.clone();
                }
            }
            let pivot_row = self.rows[row].clone();
            for (i, r) in self.rows.iter_mut().enumerate() {
                if i == row || r[col].is_zero() {
                    continue;
                }
                let f = r[col].clone();
                for (v, p) in r.iter_mut().zip(pivot_row.iter()) {
                    if !p.is_zero() {
                        *v = v.clone() - f.clone() * p.clone();
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        // drop zero rows
        self.rows.truncate(row);
        pivots
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        m.rref().len()
    }
}

/// Solves `A x = b` for a square invertible exact system; `None` if singular.
pub fn solve_square<T: Scalar>(a: &Mat<T>, b: &[T]) -> Option<Vec<T>> {
    let n = a.nrows();
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let mut aug = Mat::new(
        a.rows
            .iter()
            .zip(b.iter())
            .map(|(r, v)| {
                let mut row = r.clone();
                row.push(v.clone());
                row
            })
            .collect(),
        n + 1,
    );
    let pivots = aug.rref();
    if pivots.len() != n || pivots.iter().enumerate().any(|(i, &c)| c != i) {
        return None;
    }
    Some(aug.rows.iter().map(|r| r[n].clone()).collect())
}

/// Checks whether two matrices (over the same column labels) have equal row
/// spaces: canonical RREF comparison.
pub fn equal_row_spaces<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> bool {
    assert_eq!(a.cols, b.cols);
    let mut ra = a.clone();
    let mut rb = b.clone();
    ra.rref();
    rb.rref();
    ra.rows == rb.rows
}

/// Returns a basis (as rows) of the subspace of `a`'s row space supported on
/// the complement of `eliminate`: rows of the RREF with zero entries at every
/// eliminated column.  Assumes the eliminated columns are listed first in the
/// matrix column order for a clean echelon split; this routine reorders
/// internally, so any column set works.
pub fn eliminate_columns<T: Scalar>(a: &Mat<T>, eliminate: &[usize]) -> Mat<T> {
    let mut order: Vec<usize> = eliminate.to_vec();
    let mut rest: Vec<usize> = (0..a.cols).filter(|c| !eliminate.contains(c)).collect();
    order.append(&mut rest);
    // permute columns so eliminated ones are leftmost
    let mut m = Mat::new(
        a.rows
            .iter()
            .map(|r| order.iter().map(|&c| r[c].clone()).collect())
            .collect(),
        a.cols,
    );
    m.rref();
    let k = eliminate.len();
    let kept: Vec<Vec<T>> = m
        .rows
        .iter()
        .filter(|r| r[..k].iter().all(|v| v.is_zero()))
        .cloned()
        .collect();
    // un-permute
    let mut inv = vec![0usize; a.cols];
    for (new_pos, &old) in order.iter().enumerate() {
        inv[old] = new_pos;
    }
    Mat::new(
        kept.iter()
            .map(|r| (0..a.cols).map(|c| r[inv[c]].clone()).collect())
            .collect(),
        a.cols,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat_int, Rat};
    use num_traits::Zero;

    fn m(rows: &[&[i64]]) -> Mat<Rat> {
        let cols = rows[0].len();
        Mat::new(
            rows.iter()
                .map(|r| r.iter().map(|&v| rat_int(v)).collect())
                .collect(),
            cols,
        )
    }

    #[test]
    fn rref_and_rank() {
        let mut a = m(&[&[1, 2, 3], &[2, 4, 6], &[0, 1, 1]]);
        let pivots = a.rref();
        assert_eq!(pivots, vec![0, 1]);
        assert_eq!(a.nrows(), 2);
    }

    #[test]
    fn solve_small_system() {
        let a = m(&[&[2, 1], &[1, -1]]);
        let b = vec![rat_int(5), rat_int(1)];
        let x = solve_square(&a, &b).unwrap();
        assert_eq!(x, vec![rat_int(2), rat_int(1)]);
        let singular = m(&[&[1, 1], &[2, 2]]);
        assert!(solve_square(&singular, &b).is_none());
    }

    #[test]
    fn row_space_comparison() {
        let a = m(&[&[1, 0, 1], &[0, 1, 1]]);
        let b = m(&[&[1, 1, 2], &[1, -1, 0]]);
        assert!(equal_row_spaces(&a, &b));
        let c = m(&[&[1, 0, 0], &[0, 1, 1]]);
        assert!(!equal_row_spaces(&a, &c));
    }

    #[test]
    fn eliminate_columns_extracts_consequences() {
        // rows span: x + y, x + z; eliminating x leaves y - z.
        let a = m(&[&[1, 1, 0], &[1, 0, 1]]);
        let e = eliminate_columns(&a, &[0]);
        assert_eq!(e.nrows(), 1);
        assert!(e.rows[0][0].is_zero());
        let y = e.rows[0][1].clone();
        let z = e.rows[0][2].clone();
        assert_eq!(y, -z);
    }
}
