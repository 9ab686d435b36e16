mod common;

use common::*;
use qbd_core::linalg::max_abs;
use qbd_core::lpc::{
    compute_g, compute_g_bounded, compute_kappa, compute_rhat, homogeneous_stage_blocks, jump_probabilities,
    solve_lpca, JumpProbabilities, SERIES_TOL,
};
use qbd_core::oracle::fixed_point_r;
use qbd_core::sl::{solve_qdesa, QdesaOptions};
use qbd_core::stage::transpose_to_stage_view;

/// Weighted first-passage paths from stage 1 to stage 0 that end `h` levels
/// to the right, enumerated step by step up to `max_len` steps.
fn brute_force_g(phi: &JumpProbabilities, h: usize, max_len: usize) -> f64 {
    let steps = [(1usize, -1i64), (1, 0), (1, 1), (0, 1), (0, -1)];
    // weight[level][height], height = stage - target stage (>= 1 while alive)
    let height_cap = max_len + 2;
    let mut alive = vec![vec![0.0; height_cap]; h + 1];
    alive[0][1] = 1.0;
    let mut total = 0.0;
    for _ in 0..max_len {
        let mut next = vec![vec![0.0; height_cap]; h + 1];
        for lv in 0..=h {
            for ht in 1..height_cap - 1 {
                let w = alive[lv][ht];
                if w == 0.0 {
                    continue;
                }
                for (dl, ds) in steps {
                    let p = phi.get(dl as i32, ds as i32);
                    let (nl, nh) = (lv + dl, ht as i64 + ds);
                    if p == 0.0 || nl > h {
                        continue;
                    }
                    if nh == 0 {
                        if nl == h {
                            total += w * p;
                        }
                    } else {
                        next[nl][nh as usize] += w * p;
                    }
                }
            }
        }
        alive = next;
    }
    total
}

fn random_phi(rng: &mut impl rand::Rng) -> JumpProbabilities {
    let raw: Vec<f64> = (0..5).map(|_| rng.random_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
    JumpProbabilities::new(p[0], p[1], p[2], p[3], 1.0 - p[0] - p[1] - p[2] - p[3]).unwrap()
}

#[test]
fn g0_catalan_closed_form() {
    let phi = JumpProbabilities::new(0.0, 0.2, 0.0, 0.3, 0.5).unwrap();
    let g0 = compute_g(&phi, 0, SERIES_TOL).unwrap();
    assert!((g0 - 0.612_574).abs() < 1e-6, "{g0}");
}

#[test]
fn series_matches_path_enumeration() {
    let phi = JumpProbabilities::new(0.1, 0.15, 0.1, 0.25, 0.4).unwrap();
    for h in 0..=2 {
        let bounded = compute_g_bounded(&phi, h, 40);
        let brute = brute_force_g(&phi, h, 40);
        assert!((bounded - brute).abs() <= 1e-14, "h={h}: {bounded} vs {brute}");
    }
}

#[test]
fn rhat_matches_fixed_point_for_general_phi() {
    let phi = JumpProbabilities::new(0.1, 0.15, 0.1, 0.25, 0.4).unwrap();
    let m = 20;
    let rhat = compute_rhat(&phi, m, SERIES_TOL).unwrap();
    let (a0, a1, a2) = homogeneous_stage_blocks(&phi, 1.0, m);
    let fp = fixed_point_r(&a0, &a1, &a2, 1e-15, 1_000_000).unwrap();
    let err = max_abs(&(rhat.to_dense() - &fp.r));
    assert!(err < 1e-8, "{err}");
    assert!(fp.monotone);
    let r = rhat.to_dense();
    assert!(max_abs(&(&a0 + &r * &a1 + &r * &r * &a2)) < 1e-8);
}

#[test]
fn kappa_seed_and_first_diagonal() {
    let phi = JumpProbabilities::new(0.0, 0.2, 0.0, 0.3, 0.5).unwrap();
    let g: Vec<f64> = (0..3).map(|h| compute_g(&phi, h, SERIES_TOL).unwrap()).collect();
    let k = compute_kappa(&phi, &g, 2).unwrap();
    assert_eq!(k[0], 1.0);
    let r = compute_rhat(&phi, 3, SERIES_TOL).unwrap();
    assert!((r.first_row[0] - 0.6 / (1.0 + 0.4f64.sqrt())).abs() < 1e-15);
    let _ = rand::random::<u8>();
}

#[test]
fn random_phi_g0() {
    use rand::SeedableRng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    for _ in 0..100 {
        let phi = random_phi(&mut rng);
        let x = phi.stage_up * phi.stage_down;
        let closed = phi.stage_down * (1.0 - (1.0 - 4.0 * x).sqrt()) / (2.0 * x);
        let g0 = compute_g(&phi, 0, SERIES_TOL).unwrap();
        assert!((g0 - closed).abs() <= 1e-10, "{phi:?}: {g0} vs {closed}");
    }
}

#[test]
fn priority_lpca_matches_qdesa() {
    let spec = priority(0.2, 0.3, 1.0, 20, 30);
    let chain = spec.build_chain().unwrap();
    let stage = transpose_to_stage_view(&chain).unwrap();
    let (phi, d) = jump_probabilities(&stage).unwrap();
    assert!((d - 1.5).abs() < 1e-15);
    assert!((phi.level_up - 0.3 / 1.5).abs() < 1e-15);
    let lp = solve_lpca(&chain, SERIES_TOL).unwrap();
    let q = solve_qdesa(&chain, &QdesaOptions::default()).unwrap();
    let err = linf(&lp.steady.flatten(), &q.steady.flatten());
    println!("lpca vs qdesa {err:e}, tail {:e}, residual {:e}", lp.steady.tail_mass, lp.steady.residual_inf);
    assert!(err < 1e-7, "{err}");
    assert!(lp.special_case);
}

#[test]
fn lpca_applicability_across_the_zoo() {
    for (name, spec) in zoo(30, 30) {
        let chain = spec.build_chain().unwrap();
        match solve_lpca(&chain, SERIES_TOL) {
            Ok(lp) => {
                let q = solve_qdesa(&chain, &QdesaOptions::default()).unwrap();
                let err = linf(&lp.steady.flatten(), &q.steady.flatten());
                println!("{name}: lpca ok, vs qdesa {err:e}");
                assert!(err < 1e-7, "{name}: {err}");
            }
            Err(e) => {
                println!("{name}: {e}");
                assert_eq!(e.kind(), qbd_core::ErrorKind::Applicability, "{name}");
                assert!(name == "batch" || name == "hetero", "{name} rejected: {e}");
            }
        }
    }
}
