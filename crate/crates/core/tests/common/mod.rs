#![allow(dead_code)]

use qbd_core::models::ModelSpec;
use qbd_core::SteadyState;

pub fn spec(json: &str) -> ModelSpec {
    ModelSpec::from_json(json).expect("valid spec")
}

pub fn priority(l1: f64, l2: f64, mu: f64, levels: usize, stages: usize) -> ModelSpec {
    spec(&format!(
        r#"{{"family":"priority","params":{{"lambda1":{l1},"lambda2":{l2},"mu":{mu}}},
            "truncation":{{"levels":{levels},"stages":{stages}}}}}"#
    ))
}

pub fn longest(l: f64, mu: f64, levels: usize, stages: usize) -> ModelSpec {
    spec(&format!(
        r#"{{"family":"longest_queue","params":{{"lambda":{l},"mu":{mu}}},
            "truncation":{{"levels":{levels},"stages":{stages}}}}}"#
    ))
}

pub fn batch(l1: f64, l2: f64, mu: f64, batch1: &str, levels: usize, stages: usize) -> ModelSpec {
    spec(&format!(
        r#"{{"family":"batch_priority","params":{{"lambda1":{l1},"lambda2":{l2},"mu":{mu}}},
            "batch1":{batch1},"truncation":{{"levels":{levels},"stages":{stages}}}}}"#
    ))
}

pub fn hetero(l1: f64, l2: f64, mu: f64, levels: usize, stages: usize) -> ModelSpec {
    spec(&format!(
        r#"{{"family":"longest_queue_hetero","params":{{"lambda1":{l1},"lambda2":{l2},"mu":{mu}}},
            "truncation":{{"levels":{levels},"stages":{stages}}}}}"#
    ))
}

/// The four stable instances used throughout.
pub fn zoo(levels: usize, stages: usize) -> Vec<(&'static str, ModelSpec)> {
    vec![
        ("priority", priority(0.2, 0.3, 1.0, levels, stages)),
        ("longest", longest(1.0, 3.0, levels, stages)),
        ("batch", batch(0.2, 0.2, 1.0, r#"{"1":0.5,"2":0.5}"#, levels, stages)),
        ("hetero", hetero(0.3, 0.5, 1.0, levels, stages)),
    ]
}

/// Grid-ordered distribution from the model's own generator.
pub fn direct_grid(spec: &ModelSpec) -> Vec<f64> {
    let (q, _) = spec.full_generator().unwrap();
    qbd_core::oracle::direct_steady_state(&q).unwrap().level_vectors.remove(0)
}

/// Level-major solution rearranged into grid order.
pub fn to_grid(spec: &ModelSpec, chain: &qbd_core::LevelBlockChain, s: &SteadyState) -> Vec<f64> {
    let stages = spec.truncation.stages;
    let perm = qbd_core::models::grid_permutation(chain, stages).unwrap();
    let mut out = vec![0.0; perm.len()];
    for (k, p) in s.flatten().into_iter().enumerate() {
        out[perm[k]] = p;
    }
    out
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
