//! Tridiagonal-plus-one-column matrices and their Θ(n²) inverse.

use nalgebra::DMatrix;

use crate::linalg::{thomas, Block};

/// Relative pivot size below which the structured path gives up.
const PIVOT_TOL: f64 = 1e-13;
/// Rank-one denominator guard.
const DENOM_TOL: f64 = 1e-12;

/// `B = T + z·e_cᵀ`: a tridiagonal core `T` plus entries in the entrance
/// column `c` outside the band.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredB {
    /// `B[i][i+1]`; last entry is zero.
    pub b_up: Vec<f64>,
    /// `B[i][i-1]`; first entry is zero.
    pub b_down: Vec<f64>,
    /// `-B[i][i]`.
    pub b_diag: Vec<f64>,
    /// `B[i][c]` for rows more than one away from `c`, zero elsewhere.
    pub b_z: Vec<f64>,
    pub entrance: usize,
    /// Entrance first and every interior row carries the same four rates.
    pub element_homogeneous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fallback {
    TinyPivot { index: usize },
    RankOneDenominator(f64),
}

impl StructuredB {
    /// Recognise the pattern in a sparse square block.
    pub fn from_block(b: &Block, entrance: usize) -> Option<Self> {
        let n = b.nrows();
        if b.ncols() != n || entrance >= n {
            return None;
        }
        let mut s = StructuredB {
            b_up: vec![0.0; n],
            b_down: vec![0.0; n],
            b_diag: vec![0.0; n],
            b_z: vec![0.0; n],
            entrance,
            element_homogeneous: false,
        };
        for (i, j, v) in b.triplet_iter() {
            if j == i {
                s.b_diag[i] = -v;
            } else if j == i + 1 {
                s.b_up[i] = *v;
            } else if j + 1 == i {
                s.b_down[i] = *v;
            } else if j == entrance {
                s.b_z[i] = *v;
            } else {
                return None;
            }
        }
        s.element_homogeneous = s.detect_homogeneity();
        Some(s)
    }

    /// Entrance-first form built from per-row rates. Row 0 is
    /// `[-(d_0 + u_0), u_0, 0, ..]`, row 1 has `d_1 + z_1` in column 0, and
    /// rows `i ≥ 2` carry `z_i` in column 0, `d_i` below and `u_i` above the
    /// diagonal with diagonal `-(z_i + d_i + u_i)`. `u` of the last row only
    /// enters the diagonal.
    pub fn from_row_rates(up: &[f64], down: &[f64], z: &[f64]) -> Self {
        let n = up.len();
        assert!(n >= 1 && down.len() == n && z.len() == n);
        let mut s = StructuredB {
            b_up: up.to_vec(),
            b_down: vec![0.0; n],
            b_diag: vec![0.0; n],
            b_z: vec![0.0; n],
            entrance: 0,
            element_homogeneous: false,
        };
        s.b_up[n - 1] = 0.0;
        s.b_diag[0] = down[0] + up[0];
        for i in 1..n {
            s.b_diag[i] = z[i] + down[i] + up[i];
            if i == 1 {
                s.b_down[1] = down[1] + z[1];
            } else {
                s.b_down[i] = down[i];
                s.b_z[i] = z[i];
            }
        }
        s.element_homogeneous = s.detect_homogeneity();
        s
    }

    pub fn len(&self) -> usize {
        self.b_diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b_diag.is_empty()
    }

    /// Scalars `(b_z, b_d, b_w, b_u)` of an element-homogeneous matrix.
    pub fn homogeneous_rates(&self) -> Option<(f64, f64, f64, f64)> {
        let n = self.len();
        if self.entrance != 0 || n < 4 {
            return None;
        }
        Some((self.b_z[2], self.b_down[2], self.b_diag[2], self.b_up[2]))
    }

    fn detect_homogeneity(&self) -> bool {
        let Some((z, d, w, u)) = self.homogeneous_rates() else {
            return false;
        };
        let n = self.len();
        let last = n - 1;
        let rows_ok = (2..last).all(|i| {
            self.b_z[i] == z && self.b_down[i] == d && self.b_diag[i] == w && self.b_up[i] == u
        });
        rows_ok
            && self.b_up[0] == u
            && self.b_diag[0] == d + u
            && self.b_up[1] == u
            && self.b_diag[1] == w
            && self.b_down[1] == d + z
            && self.b_down[last] == d
            && self.b_z[last] == z
            && (self.b_diag[last] == w || self.b_diag[last] == z + d)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = -self.b_diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.b_up[i];
            }
            if i > 0 {
                m[(i, i - 1)] = self.b_down[i];
            }
            if self.b_z[i] != 0.0 {
                m[(i, self.entrance)] += self.b_z[i];
            }
        }
        m
    }
}

/// Inverse via tridiagonal factorisation plus a rank-one correction.
pub fn invert_b_structured(b: &StructuredB) -> Result<DMatrix<f64>, Fallback> {
    invert_b_structured_counted(b).map(|(m, _)| m)
}

/// As [`invert_b_structured`], also returning the number of arithmetic
/// operations performed in the inner loops.
pub fn invert_b_structured_counted(b: &StructuredB) -> Result<(DMatrix<f64>, u64), Fallback> {
    let n = b.len();
    let diag: Vec<f64> = b.b_diag.iter().map(|v| -v).collect();
    let mut ops = 0u64;
    let (beta, gamma) = match b.homogeneous_rates().filter(|_| b.element_homogeneous) {
        Some(rates) => constant_pivots(&diag, rates, &mut ops),
        None => pivots(&b.b_down, &diag, &b.b_up, &mut ops),
    };
    let mut x = tridiagonal_inverse(&b.b_down, &diag, &b.b_up, &beta, &gamma, &mut ops)?;
    if b.b_z.iter().all(|v| *v == 0.0) {
        return Ok((x, ops));
    }
    // y = T⁻¹ z
    let y = thomas(&b.b_down, &diag, &b.b_up, &b.b_z).ok_or(Fallback::TinyPivot { index: 0 })?;
    ops += 3 * n as u64;
    let c = b.entrance;
    let denom = 1.0 + y[c];
    if denom.abs() < DENOM_TOL {
        return Err(Fallback::RankOneDenominator(denom));
    }
    let row_c: Vec<f64> = (0..n).map(|j| x[(c, j)] / denom).collect();
    for j in 0..n {
        let r = row_c[j];
        let mut col = x.column_mut(j);
        for i in 0..n {
            col[i] -= y[i] * r;
        }
    }
    ops += (n * n) as u64;
    Ok((x, ops))
}

fn pivots(sub: &[f64], diag: &[f64], sup: &[f64], ops: &mut u64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut beta = vec![0.0; n];
    let mut gamma = vec![0.0; n];
    beta[0] = diag[0];
    for i in 1..n {
        beta[i] = diag[i] - sub[i] * sup[i - 1] / beta[i - 1];
    }
    gamma[n - 1] = diag[n - 1];
    for i in (0..n - 1).rev() {
        gamma[i] = diag[i] - sup[i] * sub[i + 1] / gamma[i + 1];
    }
    *ops += 2 * n as u64;
    (beta, gamma)
}

/// Pivots of the element-homogeneous core. Interior pivots obey
/// `p ← -w - d·u/p` in both sweeps, which converges to a fixed point; once it
/// is reached the remaining interior pivots are copied.
fn constant_pivots(diag: &[f64], rates: (f64, f64, f64, f64), ops: &mut u64) -> (Vec<f64>, Vec<f64>) {
    let (z, d, w, u) = rates;
    let n = diag.len();
    let last = n - 1;
    let disc = (w * w - 4.0 * d * u).max(0.0);
    let fixed = -(w + disc.sqrt()) / 2.0;
    let settled = |p: f64| (p - fixed).abs() <= 4.0 * f64::EPSILON * fixed.abs();

    let mut beta = vec![fixed; n];
    beta[0] = diag[0];
    beta[1] = -w - (d + z) * u / beta[0];
    for i in 2..last {
        beta[i] = -w - d * u / beta[i - 1];
        *ops += 1;
        if settled(beta[i]) {
            break;
        }
    }
    beta[last] = diag[last] - d * u / beta[last - 1];

    let mut gamma = vec![fixed; n];
    gamma[last] = diag[last];
    for i in (1..last).rev() {
        gamma[i] = -w - u * d / gamma[i + 1];
        *ops += 1;
        if settled(gamma[i]) {
            break;
        }
    }
    gamma[0] = diag[0] - u * (d + z) / gamma[1];
    (beta, gamma)
}

/// Entries of `T⁻¹` filled column by column from the LU (`beta`) and UL
/// (`gamma`) pivots.
fn tridiagonal_inverse(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    beta: &[f64],
    gamma: &[f64],
    ops: &mut u64,
) -> Result<DMatrix<f64>, Fallback> {
    let n = diag.len();
    let scale = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        if beta[i].abs() <= PIVOT_TOL * scale || gamma[i].abs() <= PIVOT_TOL * scale {
            return Err(Fallback::TinyPivot { index: i });
        }
    }
    let up_ratio: Vec<f64> = (0..n).map(|i| if i + 1 < n { -sup[i] / beta[i] } else { 0.0 }).collect();
    let lo_ratio: Vec<f64> = (0..n).map(|i| if i > 0 { -sub[i] / gamma[i] } else { 0.0 }).collect();
    let mut x = DMatrix::zeros(n, n);
    for j in 0..n {
        let denom = beta[j] + gamma[j] - diag[j];
        if denom.abs() <= PIVOT_TOL * scale {
            return Err(Fallback::TinyPivot { index: j });
        }
        let mut col = x.column_mut(j);
        col[j] = 1.0 / denom;
        for i in (0..j).rev() {
            col[i] = up_ratio[i] * col[i + 1];
        }
        for i in j + 1..n {
            col[i] = lo_ratio[i] * col[i - 1];
        }
    }
    *ops += (n * n) as u64;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    fn dense_inverse(b: &StructuredB) -> DMatrix<f64> {
        b.to_dense().try_inverse().unwrap()
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        max_abs(&(a - b)) / max_abs(b)
    }

    #[test]
    fn two_by_two_closed_form() {
        let (bd, bu, bz) = (0.7, 1.3, 0.4);
        let s = StructuredB::from_row_rates(&[bu, 0.9], &[bd, 0.5], &[0.0, bz]);
        let bw = s.b_diag[1];
        // [[-(bd+bu), bu], [bd1+bz, -bw]]
        let a = -(bd + bu);
        let c = 0.5 + bz;
        let det = a * (-bw) - bu * c;
        let expect = DMatrix::from_row_slice(2, 2, &[-bw / det, -bu / det, -c / det, a / det]);
        let got = invert_b_structured(&s).unwrap();
        assert!(max_abs(&(got - expect)) < 1e-14);
    }

    #[test]
    fn zero_surplus_is_plain_tridiagonal() {
        let n = 12;
        let s = StructuredB::from_row_rates(&vec![1.0; n], &vec![0.5; n], &vec![0.0; n]);
        assert!(s.b_z.iter().all(|v| *v == 0.0));
        let got = invert_b_structured(&s).unwrap();
        assert!(rel_err(&got, &dense_inverse(&s)) < 1e-12);
    }

    #[test]
    fn homogeneous_path_matches_dense() {
        // interior priority-queue B: λ1 = 1, λ2 = 1, μ = 3
        let (l1, l2, mu) = (1.0, 1.0, 3.0);
        let n = 51;
        let mut up = vec![l1; n];
        let down = vec![mu; n];
        let z = vec![l2; n];
        up[n - 1] = 0.0;
        let s = StructuredB::from_row_rates(&up, &down, &z);
        assert!(s.element_homogeneous);
        let got = invert_b_structured(&s).unwrap();
        assert!(rel_err(&got, &dense_inverse(&s)) < 1e-10);
    }

    #[test]
    fn entrance_in_the_middle() {
        let n = 9;
        let t: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|i: usize| {
                let mut r = vec![(i, i, -4.0 - i as f64 * 0.1)];
                if i + 1 < n {
                    r.push((i, i + 1, 1.5));
                }
                if i > 0 {
                    r.push((i, i - 1, 1.0));
                }
                if i.abs_diff(4) > 1 {
                    r.push((i, 4, 0.8));
                }
                r
            })
            .collect();
        let b = crate::linalg::block_from_triplets(n, n, t);
        let s = StructuredB::from_block(&b, 4).unwrap();
        assert!(!s.element_homogeneous);
        let got = invert_b_structured(&s).unwrap();
        assert!(rel_err(&got, &dense_inverse(&s)) < 1e-12);
    }
}
