//! Thin wrapper over faer's sparse LU.

use faer::prelude::SpSolver;
use faer::sparse::SparseColMat;
use faer::Mat;

use crate::error::{Error, Result};

pub struct SparseLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

/// Square sparse matrix given as `(row, col, value)` triplets; duplicates add.
pub fn factor(n: usize, triplets: &[(usize, usize, f64)]) -> Result<SparseLu> {
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, triplets)
        .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
    Ok(SparseLu { lu, n })
}

impl SparseLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Solve for several right-hand sides stored column by column.
    pub fn solve_columns(&self, cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let b = Mat::<f64>::from_fn(self.n, cols.len(), |i, j| cols[j][i]);
        let x = self.lu.solve(&b);
        (0..cols.len()).map(|j| (0..self.n).map(|i| x[(i, j)]).collect()).collect()
    }
}

/// `y = A x` for a triplet matrix.
pub fn apply(n: usize, triplets: &[(usize, usize, f64)], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for &(r, c, v) in triplets {
        y[r] += v * x[c];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let t = [(0, 0, 4.0), (1, 1, 3.0), (0, 1, 1.0), (1, 0, 2.0)];
        let lu = factor(2, &t).unwrap();
        let x = lu.solve(&[1.0, 2.0]);
        assert!((x[0] - 0.1).abs() < 1e-14 && (x[1] - 0.6).abs() < 1e-14);
        assert_eq!(apply(2, &t, &x), vec![1.0, 2.0]);
    }
}
