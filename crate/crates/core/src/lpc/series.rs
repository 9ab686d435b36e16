//! First-passage weights `G_h` and the `κ_h` recursion.

use super::{JumpProbabilities, LpcError};

/// Largest `n` for which binomials are formed exactly in 64-bit integers.
const EXACT_LIMIT: u64 = 60;
/// Consecutive small decreasing terms required before a series stops.
const GUARD: usize = 5;
const MAX_TERMS: u64 = 50_000_000;

/// Work counters for the series evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SeriesStats {
    /// Series terms evaluated, plus logarithm-domain factors for binomials.
    pub ops: u64,
    /// Whether the single-series shortcut applied.
    pub special_case: bool,
}

/// `C(n, k)` exactly, for `n ≤ 60`.
pub fn binomial_exact(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    if n > EXACT_LIMIT {
        return None;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc * (n as u128 - k as u128 + i) / i;
    }
    u64::try_from(acc).ok()
}

/// `ln C(n, k)`; exact below the limit, accumulated in the log domain above.
pub fn ln_binomial(n: u64, k: u64, ops: &mut u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if let Some(b) = binomial_exact(n, k) {
        return (b as f64).ln();
    }
    let k = k.min(n - k);
    *ops += k;
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

pub fn ln_catalan(m: u64, ops: &mut u64) -> f64 {
    ln_binomial(2 * m, m, ops) - ((m + 1) as f64).ln()
}

/// `p^e` in the log domain with `0^0 = 1`.
fn ln_pow(p: f64, e: u64) -> f64 {
    if e == 0 {
        0.0
    } else {
        e as f64 * p.ln()
    }
}

/// Sum over `m ≥ max(u, s-1)` of the path terms for fixed `(s, u)`.
/// With `max_len`, only paths of at most that many steps are included and no
/// tolerance is applied.
fn m_series(
    phi: &JumpProbabilities,
    h: u64,
    s: u64,
    u: u64,
    tol: f64,
    max_len: Option<u64>,
    ops: &mut u64,
) -> Result<f64, LpcError> {
    let t = h - s - u;
    let m0 = u.max(s.saturating_sub(1));
    let len = |m: u64| 2 * m + 1 + t;
    if max_len.is_some_and(|l| len(m0) > l) {
        return Ok(0.0);
    }
    let [p1m1, p10, p11, p01, p0m1] = phi.as_array();
    let ln_l = ln_catalan(m0, ops)
        + ln_binomial(m0 + 1, s, ops)
        + ln_binomial(m0, u, ops)
        + ln_binomial(2 * m0 + t, t, ops);
    let ln_p = ln_pow(p1m1, s) + ln_pow(p10, t) + ln_pow(p11, u) + ln_pow(p01, m0 - u) + ln_pow(p0m1, m0 + 1 - s);
    let mut ln_term = ln_l + ln_p;
    *ops += 1;
    if ln_term == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let step = p01 * p0m1;
    if step == 0.0 {
        return Ok(ln_term.exp());
    }
    let ln_step = step.ln();
    // Terms are kept as logarithms: early terms may underflow while later
    // ones near the peak do not.
    let mut ln_acc = ln_term;
    let ln_tol = tol.ln();
    let mut quiet = 0;
    let mut m = m0;
    let (sf, uf, tf) = (s as f64, u as f64, t as f64);
    loop {
        if max_len.is_some_and(|l| len(m + 1) > l) {
            return Ok(ln_acc.exp());
        }
        let mf = m as f64;
        let ratio = 2.0 * (2.0 * mf + 1.0) / (mf + 2.0)
            * ((mf + 2.0) / (mf + 2.0 - sf))
            * ((mf + 1.0) / (mf + 1.0 - uf))
            * ((2.0 * mf + tf + 2.0) * (2.0 * mf + tf + 1.0) / ((2.0 * mf + 2.0) * (2.0 * mf + 1.0)));
        let ln_next = ln_term + ratio.ln() + ln_step;
        ln_acc = log_add(ln_acc, ln_next);
        m += 1;
        *ops += 1;
        if max_len.is_none() {
            if ln_next < ln_term && ln_next <= ln_tol + ln_acc {
                quiet += 1;
                if quiet >= GUARD {
                    return Ok(ln_acc.exp());
                }
            } else {
                quiet = 0;
            }
        }
        ln_term = ln_next;
        if m - m0 > MAX_TERMS {
            return Err(LpcError::Divergent { h, terms: m - m0 });
        }
    }
}

/// `ln(e^a + e^b)`.
fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

fn g_sum(
    phi: &JumpProbabilities,
    h: u64,
    tol: f64,
    max_len: Option<u64>,
    stats: &mut SeriesStats,
) -> Result<f64, LpcError> {
    let special = phi.is_special();
    stats.special_case = special;
    let s_max = if phi.level_up_stage_down == 0.0 { 0 } else { h };
    let mut g = 0.0;
    for s in 0..=s_max {
        let u_max = if phi.level_up_stage_up == 0.0 { 0 } else { h - s };
        for u in 0..=u_max {
            if phi.level_up == 0.0 && s + u != h {
                continue;
            }
            g += m_series(phi, h, s, u, tol, max_len, &mut stats.ops)?;
        }
    }
    Ok(g)
}

/// `G_h`: weight of first-passage paths one stage down that move `h` levels.
pub fn compute_g(phi: &JumpProbabilities, h: usize, tol: f64) -> Result<f64, LpcError> {
    compute_g_counted(phi, h, tol, &mut SeriesStats::default())
}

pub fn compute_g_counted(
    phi: &JumpProbabilities,
    h: usize,
    tol: f64,
    stats: &mut SeriesStats,
) -> Result<f64, LpcError> {
    g_sum(phi, h as u64, tol, None, stats)
}

/// `G_h` restricted to paths of at most `max_len` steps.
pub fn compute_g_bounded(phi: &JumpProbabilities, h: usize, max_len: usize) -> f64 {
    g_sum(phi, h as u64, 0.0, Some(max_len as u64), &mut SeriesStats::default())
        .expect("bounded series cannot diverge")
}

/// `κ_0 … κ_{h_max}` from `G_0 … G_{h_max}`.
pub fn compute_kappa(phi: &JumpProbabilities, g: &[f64], h_max: usize) -> Result<Vec<f64>, LpcError> {
    assert!(g.len() > h_max, "need G_0..G_h_max");
    let denom = 1.0 - phi.stage_up * g[0];
    if denom.abs() < 1e-14 {
        return Err(LpcError::SingularKappa(denom));
    }
    let mut kappa = Vec::with_capacity(h_max + 1);
    kappa.push(1.0);
    for h in 1..=h_max {
        let mut num = phi.level_up * kappa[h - 1];
        let mut a = 0.0;
        let mut b = 0.0;
        for j in 0..h {
            a += g[h - j] * kappa[j];
            b += g[h - j - 1] * kappa[j];
        }
        num += phi.stage_up * a + phi.level_up_stage_up * b;
        kappa.push(num / denom);
    }
    Ok(kappa)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_binomials() {
        assert_eq!(binomial_exact(5, 2), Some(10));
        assert_eq!(binomial_exact(60, 30), Some(118_264_581_564_861_424));
        assert_eq!(binomial_exact(61, 30), None);
        assert_eq!(binomial_exact(3, 4), Some(0));
    }

    #[test]
    fn log_binomials_agree_across_the_limit() {
        let mut ops = 0;
        let exact = (binomial_exact(60, 30).unwrap() as f64).ln();
        let k: u64 = 30;
        let accumulated: f64 = (1..=k).map(|i| ((60 - k + i) as f64 / i as f64).ln()).sum();
        assert!((exact - accumulated).abs() < 1e-12);
        // C(62, 31) = C(61, 30) * 62 / 31
        let a = ln_binomial(62, 31, &mut ops);
        let b = ln_binomial(61, 30, &mut ops) + (62.0f64 / 31.0).ln();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn catalan_numbers() {
        let mut ops = 0;
        let c: Vec<f64> = (0..6).map(|m| ln_catalan(m, &mut ops).exp().round()).collect();
        assert_eq!(c, vec![1.0, 1.0, 2.0, 5.0, 14.0, 42.0]);
    }

    #[test]
    fn no_stage_up_collapses_to_one_term() {
        let phi = JumpProbabilities::new(0.0, 0.4, 0.0, 0.0, 0.6).unwrap();
        assert!((compute_g(&phi, 0, 1e-14).unwrap() - 0.6).abs() < 1e-16);
        // h = 2: two level moves then the stage drop
        assert!((compute_g(&phi, 2, 1e-14).unwrap() - 0.4 * 0.4 * 0.6).abs() < 1e-16);
    }

    #[test]
    fn kappa_without_level_coupling_vanishes() {
        let phi = JumpProbabilities::new(0.0, 0.0, 0.0, 0.45, 0.55).unwrap();
        let g: Vec<f64> = (0..6).map(|h| compute_g(&phi, h, 1e-14).unwrap()).collect();
        let k = compute_kappa(&phi, &g, 5).unwrap();
        assert_eq!(k[0], 1.0);
        assert!(k[1..].iter().all(|v| *v == 0.0));
    }
}
