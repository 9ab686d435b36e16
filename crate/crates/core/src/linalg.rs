//! Small dense/sparse helpers shared by the solvers.

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

/// Sparse block type used throughout the crate.
pub type Block = CsrMatrix<f64>;

/// Build a CSR block from `(row, col, value)` triplets. Duplicates are summed
/// and exact zeros are dropped so that structural equality means rate equality.
pub fn block_from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Block
where
    I: IntoIterator<Item = (usize, usize, f64)>,
{
    let mut coo = CooMatrix::new(nrows, ncols);
    for (i, j, v) in triplets {
        if v != 0.0 {
            coo.push(i, j, v);
        }
    }
    let csr = CsrMatrix::from(&coo);
    if csr.values().iter().any(|v| *v == 0.0) {
        // cancellation while summing duplicates
        csr.filter(|_, _, v| *v != 0.0)
    } else {
        csr
    }
}

pub fn block_from_dense(m: &DMatrix<f64>) -> Block {
    let mut t = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            t.push((i, j, m[(i, j)]));
        }
    }
    block_from_triplets(m.nrows(), m.ncols(), t)
}

pub fn to_dense(b: &Block) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(b.nrows(), b.ncols());
    for (i, j, v) in b.triplet_iter() {
        out[(i, j)] += *v;
    }
    out
}

pub fn entry(b: &Block, i: usize, j: usize) -> f64 {
    b.get_entry(i, j).map(|e| e.into_value()).unwrap_or(0.0)
}

pub fn row_sums(b: &Block) -> Vec<f64> {
    b.row_iter().map(|r| r.values().iter().sum()).collect()
}

/// Row vector times sparse block: `x · B`.
pub fn vec_times_block(x: &[f64], b: &Block) -> Vec<f64> {
    debug_assert_eq!(x.len(), b.nrows());
    let mut out = vec![0.0; b.ncols()];
    for (i, row) in b.row_iter().enumerate() {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for (j, v) in row.col_indices().iter().zip(row.values()) {
            out[*j] += xi * v;
        }
    }
    out
}

/// Row vector times dense matrix: `x · A`.
pub fn vec_times_dense(x: &[f64], a: &DMatrix<f64>) -> Vec<f64> {
    debug_assert_eq!(x.len(), a.nrows());
    (0..a.ncols())
        .map(|j| a.column(j).iter().zip(x).map(|(v, xi)| v * xi).sum())
        .collect()
}

/// Sparse times dense: `B · A`.
pub fn block_times_dense(b: &Block, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(b.nrows(), a.ncols());
    for (i, row) in b.row_iter().enumerate() {
        for (k, v) in row.col_indices().iter().zip(row.values()) {
            for j in 0..a.ncols() {
                out[(i, j)] += v * a[(*k, j)];
            }
        }
    }
    out
}

/// Dense times sparse: `A · B`.
pub fn dense_times_block(a: &DMatrix<f64>, b: &Block) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for (k, row) in b.row_iter().enumerate() {
        for (j, v) in row.col_indices().iter().zip(row.values()) {
            let src = a.column(k);
            let mut dst = out.column_mut(*j);
            dst.axpy(*v, &src, 1.0);
        }
    }
    out
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_slice(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn is_tridiagonal(b: &Block) -> bool {
    b.triplet_iter().all(|(i, j, _)| i.abs_diff(j) <= 1)
}

/// Tridiagonal matrix stored by diagonals. `sub[0]` and `sup[n-1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn from_block(b: &Block) -> Option<Self> {
        if b.nrows() != b.ncols() || !is_tridiagonal(b) {
            return None;
        }
        let n = b.nrows();
        let mut t = Tridiagonal {
            sub: vec![0.0; n],
            diag: vec![0.0; n],
            sup: vec![0.0; n],
        };
        for (i, j, v) in b.triplet_iter() {
            match j as isize - i as isize {
                -1 => t.sub[i] = *v,
                0 => t.diag[i] = *v,
                1 => t.sup[i] = *v,
                _ => unreachable!(),
            }
        }
        Some(t)
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Solve `x · T = rhs` for a row vector `x` (Thomas sweep on `Tᵀ`).
    /// Returns `None` on a vanishing pivot.
    pub fn solve_row(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        // Tᵀ has sub = sup shifted, sup = sub shifted.
        let n = self.len();
        let t_sub: Vec<f64> = (0..n).map(|i| if i > 0 { self.sup[i - 1] } else { 0.0 }).collect();
        let t_sup: Vec<f64> = (0..n).map(|i| if i + 1 < n { self.sub[i + 1] } else { 0.0 }).collect();
        thomas(&t_sub, &self.diag, &t_sup, rhs)
    }
}

/// Thomas algorithm for `T x = rhs` (no pivoting).
pub fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let scale = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut beta = vec![0.0; n];
    let mut g = vec![0.0; n];
    beta[0] = diag[0];
    g[0] = rhs[0];
    for i in 1..n {
        if beta[i - 1].abs() <= 1e-14 * scale {
            return None;
        }
        let l = sub[i] / beta[i - 1];
        beta[i] = diag[i] - l * sup[i - 1];
        g[i] = rhs[i] - l * g[i - 1];
    }
    if beta[n - 1].abs() <= 1e-14 * scale {
        return None;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = g[n - 1] / beta[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (g[i] - sup[i] * x[i + 1]) / beta[i];
    }
    Some(x)
}

/// Solve `x · A = rhs` densely. `None` if `A` is singular.
pub fn solve_row_dense(a: &DMatrix<f64>, rhs: &[f64]) -> Option<Vec<f64>> {
    let lu = a.transpose().lu();
    let b = nalgebra::DVector::from_column_slice(rhs);
    let x = lu.solve(&b)?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_are_dropped() {
        let b = block_from_triplets(2, 2, [(0, 0, 1.0), (0, 1, 0.0), (1, 1, 2.0), (1, 1, -2.0)]);
        assert_eq!(b.nnz(), 1);
        assert_eq!(entry(&b, 0, 0), 1.0);
    }

    #[test]
    fn thomas_matches_dense() {
        let t = Tridiagonal {
            sub: vec![0.0, 1.0, 2.0, 0.5],
            diag: vec![-4.0, -5.0, -6.0, -3.0],
            sup: vec![2.0, 1.5, 1.0, 0.0],
        };
        let mut dense = DMatrix::zeros(4, 4);
        for i in 0..4 {
            dense[(i, i)] = t.diag[i];
            if i > 0 {
                dense[(i, i - 1)] = t.sub[i];
            }
            if i < 3 {
                dense[(i, i + 1)] = t.sup[i];
            }
        }
        let rhs = [1.0, -2.0, 0.5, 3.0];
        let x = t.solve_row(&rhs).unwrap();
        let y = solve_row_dense(&dense, &rhs).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
