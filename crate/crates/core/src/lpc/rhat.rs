use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::series::{compute_g_counted, compute_kappa, SeriesStats};
use super::{JumpProbabilities, LpcError};

/// Upper-triangular Toeplitz rate matrix given by its first row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpcRateMatrix {
    pub first_row: Vec<f64>,
}

impl LpcRateMatrix {
    pub fn dim(&self) -> usize {
        self.first_row.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j >= i {
            self.first_row[j - i]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }

    /// Dense form whose last column carries the whole row tail
    /// `Σ_{h ≥ n-1-i} r̂_h`, given the total row sum.
    pub fn to_dense_closed(&self, row_total: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut r = self.to_dense();
        let mut head = 0.0;
        for h in 0..n {
            // row i = n-1-h sees r̂_0..r̂_{h-1} before the last column
            let i = n - 1 - h;
            r[(i, n - 1)] = (row_total - head).max(self.first_row[h]);
            head += self.first_row[h];
        }
        r
    }
}

/// `r̂_0 … r̂_{M-1}` from the lattice-path weights.
pub fn compute_rhat(phi: &JumpProbabilities, m: usize, tol: f64) -> Result<LpcRateMatrix, LpcError> {
    compute_rhat_counted(phi, m, tol).map(|(r, _)| r)
}

pub fn compute_rhat_counted(
    phi: &JumpProbabilities,
    m: usize,
    tol: f64,
) -> Result<(LpcRateMatrix, SeriesStats), LpcError> {
    assert!(m >= 1);
    let mut stats = SeriesStats::default();
    let mut g = Vec::with_capacity(m);
    for h in 0..m {
        g.push(compute_g_counted(phi, h, tol, &mut stats)?);
    }
    let kappa = compute_kappa(phi, &g, m - 1)?;
    stats.ops += (m * m) as u64;
    let root = 1.0 + (1.0 - 4.0 * phi.stage_up * phi.stage_down).max(0.0).sqrt();
    let first_row = (0..m)
        .map(|h| {
            let prev = if h > 0 { kappa[h - 1] } else { 0.0 };
            2.0 * (phi.stage_up * kappa[h] + phi.level_up_stage_up * prev) / root
        })
        .collect();
    Ok((LpcRateMatrix { first_row }, stats))
}
