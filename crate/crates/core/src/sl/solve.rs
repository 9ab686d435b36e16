use nalgebra::DMatrix;
use serde::Serialize;

use super::rates::{classify_variant, compute_rate_matrices, RateMatrixSet};
use super::{SlError, Variant};
use crate::chain::{LevelBlockChain, LevelTail};
use crate::linalg::{self, Block, Tridiagonal};
use crate::steady::SteadyState;

/// How far the normalisation sum runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Levels `0..=M2`.
    Finite(usize),
    /// All levels of a repeating chain.
    Infinite,
}

const MAX_SERIES_TERMS: usize = 10_000_000;
/// Interior rate matrices with spectral radius at or above this are unstable.
const STABLE_BELOW: f64 = 1.0 - 1e-9;

/// Normalisation vector `S = 1 + Σ_m R_1⋯R_m 1`, evaluated backwards as
/// `v ← 1 + R_m v`. An infinite horizon sums the repeating tail until the
/// increment drops below `tail_tol`.
pub fn compute_s(rates: &RateMatrixSet, horizon: Horizon, tail_tol: f64) -> Result<Vec<f64>, SlError> {
    let ones = |m: usize| vec![1.0; rates.level_size(m)];
    let (mut v, top) = match horizon {
        Horizon::Finite(m2) => (ones(m2), m2),
        Horizon::Infinite => {
            let from = rates.repeat_from().ok_or(SlError::FiniteChain)?;
            let r = rates.get(from).expect("repeating matrix");
            (geometric_tail(r, tail_tol)?, from - 1)
        }
    };
    for m in (1..=top).rev() {
        let r = rates.get(m).expect("rate matrix within horizon");
        let rv = r * nalgebra::DVector::from_column_slice(&v);
        v = ones(m - 1);
        v.iter_mut().zip(rv.iter()).for_each(|(a, b)| *a += b);
    }
    Ok(v)
}

/// `Σ_k R^k 1`, cut when the increment's ∞-norm falls below `tol`. The
/// increments of a convergent series may stay flat for about `n` terms before
/// decaying, so divergence is declared only after `max(64, 2n)` terms without
/// a new minimum.
fn geometric_tail(r: &DMatrix<f64>, tol: f64) -> Result<Vec<f64>, SlError> {
    let n = r.nrows();
    let mut term = nalgebra::DVector::from_element(n, 1.0);
    let mut sum = term.clone();
    let window = (2 * n).max(64);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for k in 0..MAX_SERIES_TERMS {
        term = r * term;
        sum += &term;
        let norm = term.amax();
        if norm < tol {
            return Ok(sum.iter().copied().collect());
        }
        if norm < best {
            best = norm;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > window {
                return Err(SlError::Divergent(k));
            }
        }
    }
    Err(SlError::Divergent(MAX_SERIES_TERMS))
}

/// `π⁰ = δ_e [S δ_e - B₀]⁻¹`, the entrance row of the inverse.
pub fn compute_pi0(b0: &Block, s: &[f64], entrance: usize) -> Result<Vec<f64>, SlError> {
    let n = b0.nrows();
    let mut rhs = vec![0.0; n];
    rhs[entrance] = 1.0;
    let pi0 = structured_pi0(b0, s, entrance, &rhs).or_else(|| {
        let mut a = -linalg::to_dense(b0);
        for i in 0..n {
            a[(i, entrance)] += s[i];
        }
        linalg::solve_row_dense(&a, &rhs)
    });
    let mut pi0 = pi0.ok_or(SlError::SingularBoundary)?;
    clamp_negative(&mut pi0, "pi0", 0)?;
    Ok(pi0)
}

/// O(n) route when `B₀` is tridiagonal apart from the entrance column:
/// with `A = T + c δ_e`, `δ_e A⁻¹ = a / (1 + a·c)` where `a T = δ_e`.
fn structured_pi0(b0: &Block, s: &[f64], entrance: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = b0.nrows();
    let mut t_entries = Vec::with_capacity(b0.nnz());
    let mut col = s.to_vec();
    for (i, j, v) in b0.triplet_iter() {
        if i.abs_diff(j) <= 1 {
            t_entries.push((i, j, -v));
        } else if j == entrance {
            col[i] -= v;
        } else {
            return None;
        }
    }
    let t = Tridiagonal::from_block(&linalg::block_from_triplets(n, n, t_entries))?;
    let a = t.solve_row(rhs)?;
    let denom = 1.0 + a.iter().zip(&col).map(|(x, y)| x * y).sum::<f64>();
    if denom.abs() < 1e-12 {
        return None;
    }
    let x: Vec<f64> = a.iter().map(|v| v / denom).collect();
    // accept only if the full system is met to working accuracy
    let mut res = linalg::vec_times_block(&x, b0);
    let xe: f64 = x.iter().zip(s).map(|(p, q)| p * q).sum();
    res.iter_mut().for_each(|v| *v = -*v);
    res[entrance] += xe;
    res[entrance] -= 1.0;
    let size = b0.values().iter().fold(0.0_f64, |m, v| m.max(v.abs())) + linalg::max_abs_slice(s);
    let scale = linalg::max_abs_slice(&x).max(1.0) * size.max(1.0);
    (linalg::max_abs_slice(&res) <= 1e-11 * scale && x.iter().all(|v| v.is_finite())).then_some(x)
}

fn clamp_negative(v: &mut [f64], what: &'static str, level: usize) -> Result<(), SlError> {
    for x in v.iter_mut() {
        if *x < 0.0 {
            if *x < -1e-12 {
                return Err(SlError::Negative {
                    what,
                    level,
                    value: *x,
                });
            }
            *x = 0.0;
        }
    }
    Ok(())
}

/// `π^m = π^{m-1} R_m`. A finite horizon reports levels `0..=M` and
/// renormalises; an infinite one stops once a level's mass falls below
/// `report_tol` and records the remainder as tail mass.
pub fn propagate_pi(
    chain: &LevelBlockChain,
    pi0: Vec<f64>,
    rates: &RateMatrixSet,
    horizon: Horizon,
    report_tol: f64,
) -> Result<SteadyState, SlError> {
    let mut levels = vec![pi0];
    let mut m = 1;
    let max_levels = 10_000_000;
    loop {
        match horizon {
            Horizon::Finite(top) if m > top => break,
            Horizon::Infinite if m > max_levels => break,
            _ => {}
        }
        let r = rates.get(m).expect("rate matrix for level");
        let mut next = linalg::vec_times_dense(levels.last().unwrap(), r);
        clamp_negative(&mut next, "pi", m)?;
        let mass: f64 = next.iter().sum();
        levels.push(next);
        if horizon == Horizon::Infinite && m + 1 >= chain.num_levels() && mass < report_tol {
            break;
        }
        m += 1;
    }
    let total: f64 = levels.iter().flatten().sum();
    let tail = match horizon {
        Horizon::Finite(_) => {
            levels.iter_mut().flatten().for_each(|v| *v /= total);
            0.0
        }
        Horizon::Infinite => (1.0 - total).max(0.0),
    };
    let residual = chain.balance_residual(&levels);
    Ok(SteadyState::new(levels, residual, tail))
}

/// Collatz–Wielandt bracket `lower ≤ ρ(R) ≤ upper` for a nonnegative matrix,
/// tightened by power iteration, with the power-iteration `estimate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralBounds {
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
    pub iterations: usize,
}

/// Power iteration on `x ← xR` until the bracket is within `rel_tol` of its
/// upper end or the estimate stalls, at most `max_iter` steps.
pub fn spectral_bounds(r: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> SpectralBounds {
    let n = r.nrows();
    let mut b = SpectralBounds {
        lower: 0.0,
        upper: 0.0,
        estimate: 0.0,
        iterations: 0,
    };
    if n == 0 {
        return b;
    }
    let mut x = nalgebra::DVector::from_element(n, 1.0 / n as f64);
    for it in 1..=max_iter {
        // keep x strictly positive so the bracket stays valid
        let floor = 1e-30 * x.amax();
        x.iter_mut().for_each(|v| *v = v.max(floor));
        let y = r.tr_mul(&x);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for (yi, xi) in y.iter().zip(x.iter()) {
            let q = yi / xi;
            lo = lo.min(q);
            hi = hi.max(q);
        }
        let norm = y.iter().sum::<f64>();
        let prev = b.estimate;
        b.estimate = norm / x.iter().sum::<f64>();
        b.lower = b.lower.max(lo);
        b.upper = if it == 1 { hi } else { b.upper.min(hi) };
        b.iterations = it;
        if norm == 0.0 {
            b.upper = 0.0;
            break;
        }
        let stalled = (b.estimate - prev).abs() <= 1e-15 * b.estimate;
        if b.upper - b.lower <= rel_tol * b.upper || stalled {
            break;
        }
        x = y / norm;
    }
    b.estimate = b.estimate.clamp(b.lower, b.upper);
    b
}

/// Spectral radius of a nonnegative matrix by power iteration.
pub fn spectral_radius(r: &DMatrix<f64>) -> f64 {
    spectral_bounds(r, 1e-12, 5000).estimate
}

#[derive(Debug, Clone)]
pub struct QdesaOptions {
    /// Requested variant; `None` uses the most specialised applicable one.
    pub variant: Option<Variant>,
    pub tail_tol: f64,
    /// Reporting cut-off for level mass on infinite chains.
    pub report_tol: f64,
}

impl Default for QdesaOptions {
    fn default() -> Self {
        QdesaOptions {
            variant: None,
            tail_tol: 1e-12,
            report_tol: 1e-16,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QdesaSolution {
    pub steady: SteadyState,
    pub variant: Variant,
    /// Spectral radius of the interior rate matrix, for homogeneous chains.
    pub spectral_radius: Option<f64>,
    pub ops: u64,
}

/// Full successive-lumping solve of a DES chain.
pub fn solve_qdesa(chain: &LevelBlockChain, opts: &QdesaOptions) -> Result<QdesaSolution, SlError> {
    let variant = opts.variant.unwrap_or_else(|| classify_variant(chain));
    let rates = compute_rate_matrices(chain, variant)?;
    let levels = chain.num_levels();
    let cut_levels = chain.tail() == LevelTail::Repeating || chain.truncation().level_cap.is_some();
    let bounds = (chain.level_homogeneous() && levels >= 3)
        .then(|| rates.get(1).map(|r| spectral_bounds(r, 1e-10, 2000)))
        .flatten();
    if let Some(b) = bounds {
        if cut_levels && b.upper >= STABLE_BELOW && b.estimate >= STABLE_BELOW {
            return Err(SlError::Unstable(b.estimate));
        }
    }
    let spectral = bounds.map(|b| b.estimate);
    let horizon = match chain.tail() {
        LevelTail::Finite => Horizon::Finite(levels - 1),
        LevelTail::Repeating => Horizon::Infinite,
    };
    let s = compute_s(&rates, horizon, opts.tail_tol)?;
    let b0 = super::build_b(chain.within_at(0), chain.up_at(0), chain.entrance(0), 0)?;
    let pi0 = compute_pi0(&b0.matrix, &s, chain.entrance(0).unwrap_or(0))?;
    let steady = propagate_pi(chain, pi0, &rates, horizon, opts.report_tol)?;
    Ok(QdesaSolution {
        steady,
        variant,
        spectral_radius: spectral,
        ops: rates.ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::block_from_triplets;

    #[test]
    fn empty_horizon_gives_ones() {
        let set = RateMatrixSet::from_matrices(vec![], 3, Variant::Qdesa);
        assert_eq!(compute_s(&set, Horizon::Finite(0), 1e-12).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn two_state_single_level() {
        let b0 = block_from_triplets(2, 2, [(0, 0, -1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0)]);
        let pi = compute_pi0(&b0, &[1.0, 1.0], 0).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
        let (a, b) = (2.0, 0.5);
        let b0 = block_from_triplets(2, 2, [(0, 0, -a), (0, 1, a), (1, 0, b), (1, 1, -b)]);
        let pi = compute_pi0(&b0, &[1.0, 1.0], 1).unwrap();
        assert!((pi[0] - b / (a + b)).abs() < 1e-15);
        assert!((pi[1] - a / (a + b)).abs() < 1e-15);
    }

    #[test]
    fn scalar_geometric_tail() {
        let set = RateMatrixSet::from_matrices(vec![DMatrix::from_element(1, 1, 0.5)], 1, Variant::Qdesa);
        let r = set.get(1).unwrap();
        let s = geometric_tail(r, 1e-15).unwrap();
        assert!((s[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_radius_of_diagonal() {
        let r = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.6]);
        assert!((spectral_radius(&r) - 0.6).abs() < 1e-10);
    }
}
