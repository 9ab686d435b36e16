mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qbd_core::chain::permute_stages;
use qbd_core::linalg::{max_abs, to_dense};
use qbd_core::oracle::{compare_distributions, direct_steady_state, fixed_point_r};
use qbd_core::sl::{compute_rate_matrices, invert_b_structured, solve_qdesa, QdesaOptions, StructuredB, Variant};
use qbd_core::truncate::truncate_stages;

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / max_abs(b)
}

fn row_rates(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    let rate = 0.05f64..5.0;
    (
        prop::collection::vec(rate.clone(), n),
        prop::collection::vec(rate.clone(), n),
        prop::collection::vec(0.0f64..5.0, n),
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn structured_inverse_matches_dense((up, down, z) in (2usize..=100).prop_flat_map(row_rates)) {
        let b = StructuredB::from_row_rates(&up, &down, &z);
        let dense = b.to_dense().try_inverse().unwrap();
        let fast = invert_b_structured(&b).expect("structured path");
        prop_assert!(rel_err(&fast, &dense) <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rescaling_time_leaves_the_distribution_unchanged(
        l1 in 0.05f64..0.4, l2 in 0.05f64..0.4, c in 0.1f64..10.0,
    ) {
        let a = priority(l1, l2, 1.0, 12, 12).build_chain().unwrap();
        let b = priority(c * l1, c * l2, c, 12, 12).build_chain().unwrap();
        let pa = solve_qdesa(&a, &QdesaOptions::default()).unwrap().steady;
        let pb = solve_qdesa(&b, &QdesaOptions::default()).unwrap().steady;
        prop_assert!(linf(&pa.flatten(), &pb.flatten()) < 1e-12);
    }

    #[test]
    fn relabeling_stages_relabels_the_solution(seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let chain = longest(1.0, 3.0, 10, 10).build_chain().unwrap();
        let perms: Vec<Vec<usize>> = chain
            .level_sizes()
            .into_iter()
            .map(|n| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let shuffled = permute_stages(&chain, &perms).unwrap();
        let base = solve_qdesa(&chain, &QdesaOptions { variant: Some(Variant::Qdesa), ..Default::default() }).unwrap();
        let moved = solve_qdesa(&shuffled, &QdesaOptions { variant: Some(Variant::Qdesa), ..Default::default() }).unwrap();
        for (m, p) in perms.iter().enumerate() {
            for (k, &old) in p.iter().enumerate() {
                prop_assert!((moved.steady.get(m, k) - base.steady.get(m, old)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn solutions_are_probability_vectors(l1 in 0.05f64..0.45, l2 in 0.05f64..0.45) {
        let chain = hetero(l1, l2, 1.0, 10, 10).build_chain().unwrap();
        let s = solve_qdesa(&chain, &QdesaOptions::default()).unwrap().steady;
        prop_assert!(s.flatten().iter().all(|p| *p >= 0.0));
        prop_assert!((s.total() - 1.0).abs() < 1e-12);
        prop_assert!(s.residual_inf < 1e-10);
    }
}

#[test]
fn quadratic_equation_holds_for_the_interior_rate_matrix() {
    for (name, spec) in [("priority", priority(0.2, 0.3, 1.0, 2, 50)), ("longest", longest(1.0, 3.0, 2, 50))] {
        let model = spec.unbounded().unwrap();
        let chain = truncate_stages(model.as_ref(), 50).unwrap();
        let rates = compute_rate_matrices(&chain, Variant::Qdesa).unwrap();
        let m = chain.num_levels();
        let r = rates.get(m).unwrap();
        let (u, w, d) = (
            to_dense(chain.up_at(m).unwrap()),
            to_dense(chain.within_at(m)),
            to_dense(chain.down_at(m).unwrap()),
        );
        let res = max_abs(&(&u + r * &w + r * r * &d));
        println!("{name}: |U + RW + R^2 D| = {res:e}");
        assert!(res <= 1e-9, "{name}: {res}");
        let fp = fixed_point_r(&u, &w, &d, 1e-14, 1_000_000).unwrap();
        assert!(fp.monotone);
        assert!(max_abs(&(&fp.r - r)) < 1e-8, "{name}");
    }
}

#[test]
fn equal_arrival_rates_give_a_symmetric_hetero_distribution() {
    let spec = hetero(0.4, 0.4, 1.0, 15, 15);
    let grid = direct_grid(&spec);
    let chain = spec.build_chain().unwrap();
    let s = to_grid(&spec, &chain, &solve_qdesa(&chain, &QdesaOptions::default()).unwrap().steady);
    assert!(linf(&grid, &s) < 1e-12);
    for n in 0..15 {
        for j in 0..15 {
            assert!((s[n * 15 + j] - s[j * 15 + n]).abs() < 1e-13);
        }
    }
}

#[test]
fn single_item_batches_reduce_to_the_priority_queue() {
    let a = batch(0.2, 0.3, 1.0, r#"{"1":1.0}"#, 20, 20);
    let b = priority(0.2, 0.3, 1.0, 20, 20);
    let (ca, cb) = (a.build_chain().unwrap(), b.build_chain().unwrap());
    let sa = solve_qdesa(&ca, &QdesaOptions::default()).unwrap().steady;
    let sb = solve_qdesa(&cb, &QdesaOptions::default()).unwrap().steady;
    let report = compare_distributions(&sa, &sb, None, 1e-13).unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn direct_solver_residuals_on_the_zoo() {
    for (name, spec) in zoo(40, 40) {
        let (q, _) = spec.full_generator().unwrap();
        let s = direct_steady_state(&q).unwrap();
        assert!(s.residual_inf <= 1e-10, "{name}: {}", s.residual_inf);
    }
}
