use serde::{Deserialize, Serialize};

/// Stationary distribution split by level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// π^m for each reported level.
    pub level_vectors: Vec<Vec<f64>>,
    /// Max-abs entry of πQ over the reported states.
    pub residual_inf: f64,
    /// Mass of the last retained level.
    pub truncation_mass: f64,
    /// Mass beyond the reported levels (infinite chains only).
    pub tail_mass: f64,
}

impl SteadyState {
    pub fn new(level_vectors: Vec<Vec<f64>>, residual_inf: f64, tail_mass: f64) -> Self {
        let truncation_mass = level_vectors.last().map(|v| v.iter().sum()).unwrap_or(0.0);
        SteadyState {
            level_vectors,
            residual_inf,
            truncation_mass,
            tail_mass,
        }
    }

    pub fn num_levels(&self) -> usize {
        self.level_vectors.len()
    }

    pub fn num_states(&self) -> usize {
        self.level_vectors.iter().map(Vec::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.level_vectors.iter().flatten().copied().collect()
    }

    /// Reported mass (1 minus the tail for infinite chains).
    pub fn total(&self) -> f64 {
        self.level_vectors.iter().flatten().sum()
    }

    pub fn level_masses(&self) -> Vec<f64> {
        self.level_vectors.iter().map(|v| v.iter().sum()).collect()
    }

    /// Entry `k` of level `m`, zero outside the reported range.
    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.level_vectors
            .get(m)
            .and_then(|v| v.get(k))
            .copied()
            .unwrap_or(0.0)
    }

    /// Split a flat vector into consecutive levels of the given sizes.
    pub fn split(flat: &[f64], sizes: &[usize]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &s in sizes {
            out.push(flat[at..at + s].to_vec());
            at += s;
        }
        out
    }
}
