//! Reference solvers that share no code with the structured algorithms.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::chain::{assemble_full_generator, LevelBlockChain};
use crate::error::{ChainError, ErrorKind};
use crate::linalg::{self, Block};
use crate::steady::SteadyState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("generator is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("generator is reducible: state {state} has no path to lower-indexed states")]
    Reducible { state: usize },
    #[error("fixed-point iteration did not converge in {iterations} steps (last change {last_change:e})")]
    NonConvergence { iterations: usize, last_change: f64 },
    #[error("A1 is singular")]
    SingularA1,
    #[error("distributions have {a} and {b} states")]
    SizeMismatch { a: usize, b: usize },
    #[error(transparent)]
    Chain(#[from] ChainError),
}

impl OracleError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            OracleError::SizeMismatch { .. } | OracleError::NotSquare { .. } => ErrorKind::Input,
            OracleError::Chain(e) => e.kind(),
            _ => ErrorKind::Numerical,
        }
    }
}

/// Stationary vector of a finite irreducible generator by GTH state
/// reduction on its band. Returned as a single level.
pub fn direct_steady_state(q: &Block) -> Result<SteadyState, OracleError> {
    let n = q.nrows();
    if q.ncols() != n {
        return Err(OracleError::NotSquare {
            rows: n,
            cols: q.ncols(),
        });
    }
    let pi = gth_banded(q)?;
    let residual = residual_inf(q, &pi);
    if residual > 1e-10 {
        log::warn!("direct solve residual {residual:e} exceeds 1e-10");
    }
    Ok(SteadyState::new(vec![pi], residual, 0.0))
}

/// Direct solve of a finite chain, split back into its levels.
pub fn direct_for_chain(chain: &LevelBlockChain) -> Result<SteadyState, OracleError> {
    let q = assemble_full_generator(chain)?;
    let flat = direct_steady_state(&q)?;
    let levels = SteadyState::split(&flat.level_vectors[0], &chain.level_sizes());
    Ok(SteadyState::new(levels, flat.residual_inf, 0.0))
}

pub fn residual_inf(q: &Block, pi: &[f64]) -> f64 {
    linalg::max_abs_slice(&linalg::vec_times_block(pi, q))
}

fn gth_banded(q: &Block) -> Result<Vec<f64>, OracleError> {
    let n = q.nrows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let bw = q.triplet_iter().map(|(i, j, _)| i.abs_diff(j)).max().unwrap_or(0);
    let width = 2 * bw + 1;
    // a[i * width + (j + bw - i)] = q[i][j]
    let mut a = vec![0.0; n * width];
    let at = |i: usize, j: usize| i * width + j + bw - i;
    for (i, j, v) in q.triplet_iter() {
        if i != j {
            a[at(i, j)] = *v;
        }
    }
    for k in (1..n).rev() {
        let lo = k.saturating_sub(bw);
        let s: f64 = (lo..k).map(|j| a[at(k, j)]).sum();
        if s <= 0.0 {
            return Err(OracleError::Reducible { state: k });
        }
        for i in lo..k {
            let idx = at(i, k);
            if a[idx] == 0.0 {
                continue;
            }
            a[idx] /= s;
            let f = a[idx];
            for j in lo..k {
                if j != i {
                    let v = a[at(k, j)];
                    if v != 0.0 {
                        a[at(i, j)] += f * v;
                    }
                }
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for k in 1..n {
        let lo = k.saturating_sub(bw);
        pi[k] = (lo..k).map(|i| pi[i] * a[at(i, k)]).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub r: DMatrix<f64>,
    pub iterations: usize,
    /// Every iterate was entrywise no smaller than its predecessor.
    pub monotone: bool,
    /// `‖A0 + R A1 + R² A2‖∞` of the result.
    pub residual: f64,
}

/// Minimal nonnegative solution of `A0 + R A1 + R² A2 = 0` by the iteration
/// `R ← -(A0 + R² A2) A1⁻¹` from `R = 0`.
pub fn fixed_point_r(
    a0: &DMatrix<f64>,
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint, OracleError> {
    let inv = a1.clone().try_inverse().ok_or(OracleError::SingularA1)?;
    let n = a0.nrows();
    let mut r = DMatrix::zeros(n, n);
    let mut monotone = true;
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        let next = -(a0 + &r * &r * a2) * &inv;
        let diff = &next - &r;
        let floor = -1e-15 * linalg::max_abs(&next).max(1.0);
        if diff.iter().any(|v| *v < floor) {
            monotone = false;
        }
        change = linalg::max_abs(&diff);
        r = next;
        if change < tol {
            let residual = linalg::max_abs(&(a0 + &r * a1 + &r * &r * a2));
            return Ok(FixedPoint {
                r,
                iterations: it,
                monotone,
                residual,
            });
        }
    }
    Err(OracleError::NonConvergence {
        iterations: max_iter,
        last_change: change,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub linf_error: f64,
    pub l1_error: f64,
    /// Largest absolute difference within each level of the first argument.
    pub per_level_max: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

/// Entrywise comparison. With `permutation`, state `k` of `a` (flattened) is
/// matched with state `permutation[k]` of `b`.
pub fn compare_distributions(
    a: &SteadyState,
    b: &SteadyState,
    permutation: Option<&[usize]>,
    tol: f64,
) -> Result<ComparisonReport, OracleError> {
    let (na, nb) = (a.num_states(), b.num_states());
    if na != nb || permutation.is_some_and(|p| p.len() != na) {
        return Err(OracleError::SizeMismatch { a: na, b: nb });
    }
    let fb = b.flatten();
    let mut k = 0;
    let mut linf = 0.0_f64;
    let mut l1 = 0.0;
    let mut per_level_max = Vec::with_capacity(a.num_levels());
    for level in &a.level_vectors {
        let mut worst = 0.0_f64;
        for &x in level {
            let y = fb[permutation.map_or(k, |p| p[k])];
            let d = (x - y).abs();
            worst = worst.max(d);
            l1 += d;
            k += 1;
        }
        linf = linf.max(worst);
        per_level_max.push(worst);
    }
    Ok(ComparisonReport {
        linf_error: linf,
        l1_error: l1,
        per_level_max,
        tol,
        pass: linf <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::block_from_triplets;

    #[test]
    fn two_state() {
        let q = block_from_triplets(2, 2, [(0, 0, -1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0)]);
        let s = direct_steady_state(&q).unwrap();
        assert_eq!(s.level_vectors[0], vec![0.5, 0.5]);
    }

    #[test]
    fn birth_death_product_form() {
        let (l, mu, n) = (1.0, 2.0, 30);
        let mut t = Vec::new();
        for i in 0..n {
            let mut out = 0.0;
            if i + 1 < n {
                t.push((i, i + 1, l));
                out += l;
            }
            if i > 0 {
                t.push((i, i - 1, mu));
                out += mu;
            }
            t.push((i, i, -out));
        }
        let q = block_from_triplets(n, n, t);
        let s = direct_steady_state(&q).unwrap();
        let norm: f64 = (0..n).map(|i| 0.5f64.powi(i as i32)).sum();
        for (i, p) in s.level_vectors[0].iter().enumerate() {
            assert!((p - 0.5f64.powi(i as i32) / norm).abs() < 1e-15);
        }
        assert!(s.residual_inf < 1e-15);
    }

    #[test]
    fn reducible_generator_is_rejected() {
        let q = block_from_triplets(2, 2, [(0, 0, -1.0), (0, 1, 1.0)]);
        assert!(matches!(direct_steady_state(&q), Err(OracleError::Reducible { state: 1 })));
    }

    #[test]
    fn scalar_fixed_point() {
        let (l, mu) = (1.0, 3.0);
        let f = |v: f64| DMatrix::from_element(1, 1, v);
        let fp = fixed_point_r(&f(l), &f(-(l + mu)), &f(mu), 1e-15, 10_000).unwrap();
        assert!((fp.r[(0, 0)] - l / mu).abs() < 1e-13);
        assert!(fp.monotone);
        let zero = fixed_point_r(&f(0.0), &f(-(l + mu)), &f(mu), 1e-15, 10).unwrap();
        assert_eq!(zero.iterations, 1);
        assert_eq!(zero.r[(0, 0)], 0.0);
    }

    #[test]
    fn identical_distributions_compare_equal() {
        let s = SteadyState::new(vec![vec![0.25, 0.25], vec![0.5]], 0.0, 0.0);
        let r = compare_distributions(&s, &s, None, 0.0).unwrap();
        assert_eq!((r.linf_error, r.l1_error, r.pass), (0.0, 0.0, true));
        let other = SteadyState::new(vec![vec![1.0]], 0.0, 0.0);
        assert!(compare_distributions(&s, &other, None, 0.0).is_err());
    }
}
