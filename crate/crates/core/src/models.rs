//! Queueing models and their JSON description.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::chain::{assemble_full_generator, GridState, LevelBlockChain, LevelTail};
use crate::error::{ChainError, ErrorKind};
use crate::linalg::{block_from_dense, Block};
use crate::truncate::{truncate_chain, truncated_generator, Caps, UnboundedChain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Priority,
    LongestQueue,
    BatchPriority,
    LongestQueueHetero,
    /// Explicit W/U/D blocks.
    Raw,
}

impl Family {
    pub const NAMES: [&'static str; 5] = [
        "priority",
        "longest_queue",
        "batch_priority",
        "longest_queue_hetero",
        "raw",
    ];

    fn required_params(self) -> &'static [&'static str] {
        match self {
            Family::Priority | Family::BatchPriority | Family::LongestQueueHetero => &["lambda1", "lambda2", "mu"],
            Family::LongestQueue => &["lambda", "mu"],
            Family::Raw => &[],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = match self {
            Family::Priority => 0,
            Family::LongestQueue => 1,
            Family::BatchPriority => 2,
            Family::LongestQueueHetero => 3,
            Family::Raw => 4,
        };
        f.write_str(Family::NAMES[i])
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "priority" => Ok(Family::Priority),
            "longest_queue" | "longest" => Ok(Family::LongestQueue),
            "batch_priority" | "batch" => Ok(Family::BatchPriority),
            "longest_queue_hetero" | "longest_hetero" | "hetero" => Ok(Family::LongestQueueHetero),
            "raw" => Ok(Family::Raw),
            "feedback" => Err("family \"feedback\" is not supported: the feedback queue is outside the scope of this tool".into()),
            other => Err(format!(
                "unknown family \"{other}\" (expected one of {})",
                Family::NAMES.join(", ")
            )),
        }
    }
}

/// Explicit blocks for the raw family: `within[m]`, `up[m]` (absent at the
/// top), `down[m]` (absent at level 0), all dense row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLevel {
    #[serde(rename = "W")]
    pub within: Vec<Vec<f64>>,
    #[serde(rename = "U", default, skip_serializing_if = "Option::is_none")]
    pub up: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub down: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch1: Option<BTreeMap<usize, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch2: Option<BTreeMap<usize, f64>>,
    pub truncation: Caps,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<RawLevel>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),
    #[error("rate {name} must be positive, got {value}")]
    NonPositiveRate { name: String, value: f64 },
    #[error("batch size {support} of {which} does not fit a cap of {cap}")]
    BatchExceedsCap {
        which: &'static str,
        support: usize,
        cap: usize,
    },
    #[error("level batches of size {0} jump several levels and leave the QBD class; only the direct solver handles them")]
    MultiLevelBatch(usize),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

impl ModelError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ModelError::MultiLevelBatch(_) => ErrorKind::Applicability,
            ModelError::Chain(e) => e.kind(),
            _ => ErrorKind::Input,
        }
    }
}

fn validate_batch(name: &str, dist: &BTreeMap<usize, f64>, errors: &mut Vec<String>) {
    if dist.is_empty() {
        errors.push(format!("{name} is empty"));
        return;
    }
    if dist.contains_key(&0) {
        errors.push(format!("{name} has a batch of size 0"));
    }
    if let Some((k, p)) = dist.iter().find(|(_, p)| !(**p >= 0.0 && p.is_finite())) {
        errors.push(format!("{name} has invalid probability {p} for size {k}"));
    }
    let sum: f64 = dist.values().sum();
    if (sum - 1.0).abs() > 1e-12 {
        errors.push(format!("{name} sums to {sum}, not 1"));
    }
}

fn parse_batch(v: &Value, name: &str, errors: &mut Vec<String>) -> Option<BTreeMap<usize, f64>> {
    let Value::Object(map) = v else {
        errors.push(format!("{name} must be an object mapping batch size to probability"));
        return None;
    };
    let mut out = BTreeMap::new();
    for (k, p) in map {
        match (k.parse::<usize>(), p.as_f64()) {
            (Ok(k), Some(p)) => {
                out.insert(k, p);
            }
            _ => errors.push(format!("{name}: entry \"{k}\" is not size -> probability")),
        }
    }
    Some(out)
}

impl ModelSpec {
    /// Parse and validate, collecting every field-level problem.
    pub fn from_json(text: &str) -> Result<ModelSpec, ModelError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| ModelError::InvalidSpec(vec![format!("malformed JSON: {e}")]))?;
        let mut errors = Vec::new();
        let Value::Object(obj) = &value else {
            return Err(ModelError::InvalidSpec(vec!["spec must be a JSON object".into()]));
        };
        let family = match obj.get("family").and_then(Value::as_str) {
            Some(s) => match s.parse::<Family>() {
                Ok(f) => Some(f),
                Err(e) => {
                    errors.push(e);
                    None
                }
            },
            None => {
                errors.push("missing string field \"family\"".into());
                None
            }
        };
        let mut params = BTreeMap::new();
        match obj.get("params") {
            Some(Value::Object(p)) => {
                for (k, v) in p {
                    match v.as_f64() {
                        Some(x) => {
                            params.insert(k.clone(), x);
                        }
                        None => errors.push(format!("param {k} is not a number")),
                    }
                }
            }
            Some(_) => errors.push("params must be an object".into()),
            None => {}
        }
        if let Some(f) = family {
            for p in f.required_params() {
                if !params.contains_key(*p) {
                    errors.push(format!("missing param {p}"));
                }
            }
        }
        let batch1 = obj.get("batch1").and_then(|v| parse_batch(v, "batch1", &mut errors));
        let batch2 = obj.get("batch2").and_then(|v| parse_batch(v, "batch2", &mut errors));
        for (name, b) in [("batch1", &batch1), ("batch2", &batch2)] {
            if let Some(b) = b {
                validate_batch(name, b, &mut errors);
            }
        }
        let truncation = match obj.get("truncation") {
            Some(t) => match serde_json::from_value::<Caps>(t.clone()) {
                Ok(c) => Some(c),
                Err(e) => {
                    errors.push(format!("truncation: {e}"));
                    None
                }
            },
            None if family == Some(Family::Raw) => Some(Caps::new(0, 0)),
            None => {
                errors.push("missing truncation {\"levels\", \"stages\"}".into());
                None
            }
        };
        let levels = match obj.get("levels") {
            Some(l) => match serde_json::from_value::<Vec<RawLevel>>(l.clone()) {
                Ok(l) => Some(l),
                Err(e) => {
                    errors.push(format!("levels: {e}"));
                    None
                }
            },
            None => {
                if family == Some(Family::Raw) {
                    errors.push("raw family needs \"levels\"".into());
                }
                None
            }
        };
        match (family, truncation, errors.is_empty()) {
            (Some(family), Some(truncation), true) => Ok(ModelSpec {
                family,
                params,
                batch1,
                batch2,
                truncation,
                levels,
            }),
            _ => Err(ModelError::InvalidSpec(errors)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    fn rate(&self, name: &str) -> Result<f64, ModelError> {
        let v = *self
            .params
            .get(name)
            .ok_or_else(|| ModelError::InvalidSpec(vec![format!("missing param {name}")]))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(ModelError::NonPositiveRate {
                name: name.into(),
                value: v,
            });
        }
        Ok(v)
    }

    fn batch(&self, which: &'static str) -> BTreeMap<usize, f64> {
        let b = if which == "batch1" { &self.batch1 } else { &self.batch2 };
        b.clone().unwrap_or_else(|| BTreeMap::from([(1, 1.0)]))
    }

    /// The untruncated model, for every family except raw.
    pub fn unbounded(&self) -> Result<Box<dyn UnboundedChain>, ModelError> {
        Ok(match self.family {
            Family::Priority => Box::new(Priority {
                lambda1: self.rate("lambda1")?,
                lambda2: self.rate("lambda2")?,
                mu: self.rate("mu")?,
            }),
            Family::LongestQueue => Box::new(LongestQueue {
                lambda: self.rate("lambda")?,
                mu: self.rate("mu")?,
            }),
            Family::BatchPriority => Box::new(BatchPriority {
                lambda1: self.rate("lambda1")?,
                lambda2: self.rate("lambda2")?,
                mu: self.rate("mu")?,
                batch1: self.batch("batch1"),
                batch2: self.batch("batch2"),
            }),
            Family::LongestQueueHetero => Box::new(LongestQueueHetero {
                lambda1: self.rate("lambda1")?,
                lambda2: self.rate("lambda2")?,
                mu: self.rate("mu")?,
            }),
            Family::Raw => {
                return Err(ModelError::InvalidSpec(vec!["raw chains have no grid description".into()]))
            }
        })
    }

    /// Stability warning for parameters outside the ergodic region.
    pub fn stability_warning(&self) -> Option<String> {
        let p = |k: &str| self.params.get(k).copied().unwrap_or(f64::NAN);
        let mean = |b: &BTreeMap<usize, f64>| b.iter().map(|(k, p)| *k as f64 * p).sum::<f64>();
        let (load, cap, what) = match self.family {
            Family::Priority => (p("lambda1") + p("lambda2"), p("mu"), "lambda1 + lambda2 < mu"),
            Family::LongestQueue => (2.0 * p("lambda"), p("mu"), "2 lambda < mu"),
            Family::BatchPriority => (
                p("lambda1") * mean(&self.batch("batch1")) + p("lambda2") * mean(&self.batch("batch2")),
                p("mu"),
                "lambda1 E[Z1] + lambda2 E[Z2] < mu",
            ),
            Family::LongestQueueHetero => (p("lambda1") + p("lambda2"), p("mu"), "lambda1 + lambda2 < mu"),
            Family::Raw => return None,
        };
        (load >= cap).then(|| format!("{} parameters violate the stability condition {what}", self.family))
    }

    /// Level-block chain of the truncated model.
    pub fn build_chain(&self) -> Result<LevelBlockChain, ModelError> {
        if let Some(w) = self.stability_warning() {
            log::warn!("{w}");
        }
        match self.family {
            Family::Priority => build_priority(self),
            Family::LongestQueue => build_longest(self),
            Family::BatchPriority => build_batch_priority(self),
            Family::LongestQueueHetero => build_longest_hetero(self),
            Family::Raw => build_raw(self),
        }
    }

    /// Generator over the capped grid in row-major `(n, j)` order, built
    /// straight from the transition rules (raw: the assembled chain).
    pub fn full_generator(&self) -> Result<(Block, Option<Vec<GridState>>), ModelError> {
        if self.family == Family::Raw {
            let chain = build_raw(self)?;
            return Ok((assemble_full_generator(&chain)?, None));
        }
        if self.family == Family::BatchPriority {
            self.check_batch_caps()?;
        }
        let model = self.unbounded()?;
        let (q, states) = truncated_generator(model.as_ref(), self.truncation)?;
        Ok((q, Some(states)))
    }

    fn check_batch_caps(&self) -> Result<(), ModelError> {
        for (which, cap) in [("batch1", self.truncation.stages), ("batch2", self.truncation.levels)] {
            let support = *self.batch(which).keys().last().unwrap_or(&1);
            if support >= cap {
                return Err(ModelError::BatchExceedsCap { which, support, cap });
            }
        }
        Ok(())
    }
}

/// For each level-major state of `chain`, its index in the row-major grid
/// ordering of [`ModelSpec::full_generator`].
pub fn grid_permutation(chain: &LevelBlockChain, stages: usize) -> Option<Vec<usize>> {
    let labels = chain.labels()?;
    Some(labels.iter().flatten().map(|&(n, j)| n * stages + j).collect())
}

fn truncate(spec: &ModelSpec, model: &dyn UnboundedChain) -> Result<LevelBlockChain, ModelError> {
    Ok(truncate_chain(model, spec.truncation)?)
}

/// Preemptive priority queue: `n` low-priority (level), `j` high-priority
/// (stage) customers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priority {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
}

impl UnboundedChain for Priority {
    fn transitions(&self, (n, j): GridState) -> Vec<(GridState, f64)> {
        let mut t = vec![((n, j + 1), self.lambda1), ((n + 1, j), self.lambda2)];
        if j > 0 {
            t.push(((n, j - 1), self.mu));
        } else if n > 0 {
            t.push(((n - 1, 0), self.mu));
        }
        t
    }

    fn homogeneous_from(&self) -> Option<usize> {
        Some(1)
    }
}

pub fn build_priority(spec: &ModelSpec) -> Result<LevelBlockChain, ModelError> {
    truncate(spec, spec.unbounded()?.as_ref())
}

/// Two queues fed at rate `λ` each, one server on the longest queue: `n` is
/// the shorter length (level), `j` the difference (stage).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongestQueue {
    pub lambda: f64,
    pub mu: f64,
}

impl UnboundedChain for LongestQueue {
    fn transitions(&self, (n, j): GridState) -> Vec<(GridState, f64)> {
        let mut t = Vec::with_capacity(3);
        if j == 0 {
            t.push(((n, 1), 2.0 * self.lambda));
            if n > 0 {
                t.push(((n - 1, 1), self.mu));
            }
        } else {
            t.push(((n, j + 1), self.lambda));
            t.push(((n + 1, j - 1), self.lambda));
            t.push(((n, j - 1), self.mu));
        }
        t
    }

    fn homogeneous_from(&self) -> Option<usize> {
        Some(1)
    }
}

pub fn build_longest(spec: &ModelSpec) -> Result<LevelBlockChain, ModelError> {
    truncate(spec, spec.unbounded()?.as_ref())
}

/// Priority queue with batch arrivals; batch sizes follow `batch1` (stage
/// direction) and `batch2` (level direction).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPriority {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
    pub batch1: BTreeMap<usize, f64>,
    pub batch2: BTreeMap<usize, f64>,
}

impl UnboundedChain for BatchPriority {
    fn transitions(&self, (n, j): GridState) -> Vec<(GridState, f64)> {
        let mut t = Vec::new();
        for (k, p) in &self.batch1 {
            if *p > 0.0 {
                t.push(((n, j + k), self.lambda1 * p));
            }
        }
        for (k, p) in &self.batch2 {
            if *p > 0.0 {
                t.push(((n + k, j), self.lambda2 * p));
            }
        }
        if j > 0 {
            t.push(((n, j - 1), self.mu));
        } else if n > 0 {
            t.push(((n - 1, 0), self.mu));
        }
        t
    }

    fn homogeneous_from(&self) -> Option<usize> {
        Some(1)
    }
}

pub fn build_batch_priority(spec: &ModelSpec) -> Result<LevelBlockChain, ModelError> {
    spec.check_batch_caps()?;
    let support = *spec.batch("batch2").keys().last().unwrap_or(&1);
    if support > 1 {
        return Err(ModelError::MultiLevelBatch(support));
    }
    truncate(spec, spec.unbounded()?.as_ref())
}

/// Two queues with arrival rates `λ1` (queue 1, stage `j`) and `λ2` (queue 2,
/// level coordinate `n`); the server works on the longest queue and splits
/// ties evenly. Levels are L-shaped around the diagonal state `(m, m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongestQueueHetero {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu: f64,
}

impl UnboundedChain for LongestQueueHetero {
    fn transitions(&self, (n, j): GridState) -> Vec<(GridState, f64)> {
        let mut t = vec![((n, j + 1), self.lambda1), ((n + 1, j), self.lambda2)];
        if j > n {
            t.push(((n, j - 1), self.mu));
        } else if n > j {
            t.push(((n - 1, j), self.mu));
        } else if n > 0 {
            t.push(((n, j - 1), self.mu / 2.0));
            t.push(((n - 1, j), self.mu / 2.0));
        }
        t
    }

    /// `L_0 = {(0,0)}`, `L_m = {(n, m-1): n ≥ m} ∪ {(m,m)} ∪ {(m-1, i): i ≥ m}`,
    /// ordered from the far end of the `n` arm through `(m, m)` to the far
    /// end of the `j` arm.
    fn level_sets(&self, levels: usize, stages: usize) -> Vec<Vec<GridState>> {
        let mut sets = vec![vec![(0, 0)]];
        for m in 1.. {
            let mut set: Vec<GridState> = (m..levels).rev().map(|n| (n, m - 1)).filter(|_| m - 1 < stages).collect();
            if m < levels && m < stages {
                set.push((m, m));
            }
            if m - 1 < levels {
                set.extend((m..stages).map(|i| (m - 1, i)));
            }
            if set.is_empty() {
                break;
            }
            sets.push(set);
        }
        sets
    }
}

pub fn build_longest_hetero(spec: &ModelSpec) -> Result<LevelBlockChain, ModelError> {
    truncate(spec, spec.unbounded()?.as_ref())
}

fn build_raw(spec: &ModelSpec) -> Result<LevelBlockChain, ModelError> {
    let levels = spec
        .levels
        .as_ref()
        .ok_or_else(|| ModelError::InvalidSpec(vec!["raw family needs \"levels\"".into()]))?;
    let dense = |rows: &Vec<Vec<f64>>, what: &str, m: usize| -> Result<Block, ModelError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(ModelError::InvalidSpec(vec![format!("{what} of level {m} is ragged")]));
        }
        Ok(block_from_dense(&DMatrix::from_fn(r, c, |i, j| rows[i][j])))
    };
    let top = levels.len().saturating_sub(1);
    let mut within = Vec::new();
    let mut up = Vec::new();
    let mut down = Vec::new();
    for (m, level) in levels.iter().enumerate() {
        within.push(dense(&level.within, "W", m)?);
        match (&level.up, m < top) {
            (Some(u), true) => up.push(dense(u, "U", m)?),
            (None, true) => return Err(ModelError::InvalidSpec(vec![format!("level {m} is missing U")])),
            _ => {}
        }
        match (&level.down, m > 0) {
            (Some(d), true) => down.push(dense(d, "D", m)?),
            (None, true) => return Err(ModelError::InvalidSpec(vec![format!("level {m} is missing D")])),
            _ => {}
        }
    }
    Ok(LevelBlockChain::new(within, up, down, LevelTail::Finite)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for name in Family::NAMES {
            assert_eq!(name.parse::<Family>().unwrap().to_string(), name);
        }
        assert!("feedback".parse::<Family>().unwrap_err().contains("outside the scope"));
    }

    #[test]
    fn hetero_levels_partition_the_box() {
        let m = LongestQueueHetero {
            lambda1: 1.0,
            lambda2: 1.0,
            mu: 3.0,
        };
        for (levels, stages) in [(5, 5), (6, 4), (3, 7)] {
            let sets = m.level_sets(levels, stages);
            let mut all: Vec<GridState> = sets.iter().flatten().copied().collect();
            all.sort();
            let expect: Vec<GridState> = (0..levels).flat_map(|n| (0..stages).map(move |j| (n, j))).collect();
            assert_eq!(all, expect, "caps ({levels},{stages})");
        }
    }
}
