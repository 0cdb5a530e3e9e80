//! Compressed sparse row storage for the Markov generators. Only the
//! operations the propagation paths need: triplet assembly with duplicate
//! merging, matvec, column sums, and entry iteration for export.

use super::NumericsError;

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, NumericsError> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(NumericsError::InvalidInput(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols}"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }

        let mut row_ptr = vec![0usize; nrows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col_idx: Vec<usize> = merged.iter().map(|&(_, c, _)| c).collect();
        let values: Vec<f64> = merged.iter().map(|&(_, _, v)| v).collect();
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A·x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (row, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    /// Per-column sums (probability-conservation check for generators).
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.ncols];
        for row in 0..self.nrows {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                sums[self.col_idx[k]] += self.values[k];
            }
        }
        sums
    }

    /// Entries in row-major order as (row, col, value).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |row| {
            (self.row_ptr[row]..self.row_ptr[row + 1])
                .map(move |k| (row, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        for k in self.row_ptr[row]..self.row_ptr[row + 1] {
            if self.col_idx[k] == col {
                return self.values[k];
            }
        }
        0.0
    }

    /// Dense copy; intended for small matrices (tests, dense exponentials).
    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut dense = ndarray::Array2::zeros((self.nrows, self.ncols));
        for (r, c, v) in self.entries() {
            dense[[r, c]] += v;
        }
        dense
    }

    /// Largest |diagonal| entry; the explicit-Euler stability limit is
    /// δ·max|L_jj| ≤ 1 for Markov generators.
    pub fn max_abs_diagonal(&self) -> f64 {
        let mut best = 0.0f64;
        let n = self.nrows.min(self.ncols);
        for i in 0..n {
            best = best.max(self.get(i, i).abs());
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_assemble_and_multiply() {
        let m = CsrMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (1, 2, -1.0), (2, 1, 0.5)]).unwrap();
        let mut y = vec![0.0; 3];
        m.matvec(&[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, vec![2.0, -3.0, 1.0]);
        assert_eq!(m.nnz(), 3);
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.5), (1, 1, -1.0)]).unwrap();
        assert_eq!(m.get(0, 0), 3.5);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn column_sums_and_empty_rows() {
        let m = CsrMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (2, 0, -1.0), (2, 1, 4.0)]).unwrap();
        assert_eq!(m.column_sums(), vec![0.0, 4.0]);
        let mut y = vec![0.0; 3];
        m.matvec(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![1.0, 0.0, 3.0]);
    }

    #[test]
    fn rejects_out_of_bounds_triplets() {
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn dense_round_trip_preserves_entries() {
        let t = [(0, 1, 3.0), (1, 0, -2.0)];
        let m = CsrMatrix::from_triplets(2, 2, &t).unwrap();
        let d = m.to_dense();
        assert_eq!(d[[0, 1]], 3.0);
        assert_eq!(d[[1, 0]], -2.0);
        assert_eq!(d[[0, 0]], 0.0);
    }
}
