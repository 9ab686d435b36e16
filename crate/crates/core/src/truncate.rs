//! Reflecting truncation of infinite two-dimensional chains.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::chain::{GridState, LevelBlockChain, LevelTail, TruncationMeta};
use crate::error::ChainError;
use crate::linalg::{block_from_triplets, Block};

/// An infinite chain on the grid `(n, j)`, described by its transitions.
pub trait UnboundedChain {
    /// Outgoing transitions of `s` with positive rates (no self loops).
    fn transitions(&self, s: GridState) -> Vec<(GridState, f64)>;

    /// Extent of the stage coordinate when it is finite by construction.
    fn natural_stages(&self) -> Option<usize> {
        None
    }

    /// Level from which all level blocks repeat in the untruncated chain.
    fn homogeneous_from(&self) -> Option<usize> {
        None
    }

    /// Level sets of the capped grid `n < levels`, `j < stages`, each listed
    /// in within-level order. Default: level `m` is the row `n = m`.
    fn level_sets(&self, levels: usize, stages: usize) -> Vec<Vec<GridState>> {
        (0..levels)
            .map(|n| (0..stages).map(|j| (n, j)).collect())
            .collect()
    }
}

/// Numbers of retained levels and stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub levels: usize,
    pub stages: usize,
}

impl Caps {
    pub fn new(levels: usize, stages: usize) -> Self {
        Caps { levels, stages }
    }
}

fn stage_extent(model: &dyn UnboundedChain, caps: Caps) -> Result<usize, ChainError> {
    match model.natural_stages() {
        Some(k) => Ok(k),
        None if caps.stages < 2 => Err(ChainError::CapTooSmall {
            which: "stage",
            cap: caps.stages,
        }),
        None => Ok(caps.stages),
    }
}

/// Grid states of the capped box in row-major order and the generator over
/// them: outflow leaving the box is deleted and the diagonal re-balanced.
/// Independent of any level partition.
pub fn truncated_generator(
    model: &dyn UnboundedChain,
    caps: Caps,
) -> Result<(Block, Vec<GridState>), ChainError> {
    if caps.levels < 2 {
        return Err(ChainError::CapTooSmall {
            which: "level",
            cap: caps.levels,
        });
    }
    let stages = stage_extent(model, caps)?;
    let index = |(n, j): GridState| (n < caps.levels && j < stages).then_some(n * stages + j);
    let states: Vec<GridState> = (0..caps.levels)
        .flat_map(|n| (0..stages).map(move |j| (n, j)))
        .collect();
    let mut t = Vec::new();
    for (k, &s) in states.iter().enumerate() {
        let mut out = 0.0;
        for (to, rate) in model.transitions(s) {
            if to == s {
                continue;
            }
            if let Some(c) = index(to) {
                t.push((k, c, rate));
                out += rate;
            }
        }
        t.push((k, k, -out));
    }
    let n = states.len();
    Ok((block_from_triplets(n, n, t), states))
}

/// Cut `model` to `caps` and arrange it by its level sets.
pub fn truncate_chain(model: &dyn UnboundedChain, caps: Caps) -> Result<LevelBlockChain, ChainError> {
    if caps.levels < 2 {
        return Err(ChainError::CapTooSmall {
            which: "level",
            cap: caps.levels,
        });
    }
    let stages = stage_extent(model, caps)?;
    let sets = model.level_sets(caps.levels, stages);
    let chain = build_from_sets(model, &sets, caps.levels, stages, LevelTail::Finite, sets.len())?;
    Ok(chain.with_truncation(TruncationMeta {
        level_cap: Some(caps.levels),
        stage_cap: model.natural_stages().is_none().then_some(caps.stages),
    }))
}

/// Keep the level direction infinite: levels up to the first repeating one
/// are stored explicitly and the last stored level repeats.
pub fn truncate_stages(model: &dyn UnboundedChain, stage_cap: usize) -> Result<LevelBlockChain, ChainError> {
    let k = model.homogeneous_from().ok_or(ChainError::NoRepeatingLevel)?;
    let stages = stage_extent(model, Caps::new(2, stage_cap))?;
    // Build a finite box two levels taller than needed and keep levels 0..=k+1;
    // level k+1 then has its full up block.
    let box_levels = k + 3;
    let sets = model.level_sets(box_levels, stages);
    let chain = build_from_sets(model, &sets, box_levels, stages, LevelTail::Repeating, k + 2)?;
    Ok(chain.with_truncation(TruncationMeta {
        level_cap: None,
        stage_cap: model.natural_stages().is_none().then_some(stage_cap),
    }))
}

fn build_from_sets(
    model: &dyn UnboundedChain,
    sets: &[Vec<GridState>],
    levels: usize,
    stages: usize,
    tail: LevelTail,
    keep: usize,
) -> Result<LevelBlockChain, ChainError> {
    let mut index: HashMap<GridState, (usize, usize)> = HashMap::new();
    for (m, set) in sets.iter().enumerate() {
        for (k, &s) in set.iter().enumerate() {
            index.insert(s, (m, k));
        }
    }
    for n in 0..levels {
        for j in 0..stages {
            if !index.contains_key(&(n, j)) {
                return Err(ChainError::Unpartitioned((n, j)));
            }
        }
    }
    let mut within = vec![Vec::new(); keep];
    let mut up = vec![Vec::new(); keep];
    let mut down = vec![Vec::new(); keep];
    for (m, set) in sets.iter().enumerate().take(keep) {
        for (k, &s) in set.iter().enumerate() {
            let mut out = 0.0;
            for (to, rate) in model.transitions(s) {
                if to == s {
                    continue;
                }
                let Some(&(lt, kt)) = index.get(&to) else {
                    continue;
                };
                out += rate;
                if lt == m {
                    within[m].push((k, kt, rate));
                } else if lt == m + 1 {
                    up[m].push((k, kt, rate));
                } else if lt + 1 == m {
                    down[m].push((k, kt, rate));
                } else {
                    return Err(ChainError::NotLevelQbd { from: s, to });
                }
            }
            within[m].push((k, k, -out));
        }
    }
    let size = |m: usize| sets[m].len();
    let w = (0..keep)
        .map(|m| block_from_triplets(size(m), size(m), within[m].iter().copied()))
        .collect();
    let up_count = match tail {
        LevelTail::Finite => keep - 1,
        LevelTail::Repeating => keep,
    };
    let u = (0..up_count)
        .map(|m| block_from_triplets(size(m), size(m + 1), up[m].iter().copied()))
        .collect();
    let d = (1..keep)
        .map(|m| block_from_triplets(size(m), size(m - 1), down[m].iter().copied()))
        .collect();
    Ok(LevelBlockChain::new(w, u, d, tail)?.with_labels(sets[..keep].to_vec()))
}
