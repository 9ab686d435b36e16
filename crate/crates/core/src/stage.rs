//! Stage-major view of a finite, uniform chain.

use crate::chain::{LevelBlockChain, LevelTail};
use crate::error::ChainError;
use crate::linalg::{block_from_triplets, Block};

/// Generator blocks when states are ordered by stage. Each block is indexed by
/// level. `a1_top` is the within-stage block of the last retained stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageBlockChain {
    pub a0: Block,
    pub a1: Block,
    pub a2: Block,
    pub a1_top: Block,
    pub b0: Block,
    pub b1: Block,
    pub num_stages: usize,
    /// Whether the level direction was cut by a reflecting cap.
    pub level_capped: bool,
}

impl StageBlockChain {
    pub fn num_levels(&self) -> usize {
        self.b1.nrows()
    }

    /// Stage-major generator with `num_stages` stages.
    pub fn assemble(&self) -> Block {
        let l = self.num_levels();
        let s = self.num_stages;
        let mut t = Vec::new();
        let mut push = |b: &Block, from: usize, to: usize| {
            for (i, j, v) in b.triplet_iter() {
                t.push((from * l + i, to * l + j, *v));
            }
        };
        for k in 0..s {
            let within = if k == 0 {
                &self.b1
            } else if k + 1 == s {
                &self.a1_top
            } else {
                &self.a1
            };
            push(within, k, k);
            if k + 1 < s {
                push(if k == 0 { &self.b0 } else { &self.a0 }, k, k + 1);
            }
            if k > 0 {
                push(&self.a2, k, k - 1);
            }
        }
        block_from_triplets(s * l, s * l, t)
    }
}

/// Level-major index of state `(m, i)` to its stage-major index, for a chain
/// with `levels` levels and `stages` stages.
pub fn level_to_stage_permutation(levels: usize, stages: usize) -> Vec<usize> {
    (0..levels * stages)
        .map(|k| {
            let (m, i) = (k / stages, k % stages);
            i * levels + m
        })
        .collect()
}

/// Reorder a finite, uniform chain by stages. Requires every transition to
/// move at most one stage and the stage blocks to repeat from stage 1 on.
pub fn transpose_to_stage_view(chain: &LevelBlockChain) -> Result<StageBlockChain, ChainError> {
    if chain.tail() != LevelTail::Finite {
        return Err(ChainError::InfiniteChain);
    }
    let stages = chain.level_size(0);
    for m in 0..chain.num_levels() {
        if chain.level_size(m) != stages {
            return Err(ChainError::NonUniform {
                first: stages,
                other: chain.level_size(m),
                level: m,
            });
        }
    }
    let levels = chain.num_levels();
    // triplets per stage: within, up, down
    let mut within = vec![Vec::new(); stages];
    let mut up = vec![Vec::new(); stages];
    let mut down = vec![Vec::new(); stages];
    for m in 0..levels {
        let mut visit = |b: &Block, to_level: usize| -> Result<(), ChainError> {
            for (i, j, v) in b.triplet_iter() {
                let t = (m, to_level, *v);
                if j == i {
                    within[i].push(t);
                } else if j == i + 1 {
                    up[i].push(t);
                } else if j + 1 == i {
                    down[i].push(t);
                } else {
                    return Err(ChainError::NotStageQbd {
                        level: m,
                        from: i,
                        to: j,
                    });
                }
            }
            Ok(())
        };
        visit(chain.within_at(m), m)?;
        if let Some(u) = chain.up_at(m) {
            visit(u, m + 1)?;
        }
        if let Some(d) = chain.down_at(m) {
            visit(d, m - 1)?;
        }
    }
    let build = |t: &Vec<(usize, usize, f64)>| block_from_triplets(levels, levels, t.iter().copied());
    let within: Vec<Block> = within.iter().map(build).collect();
    let up: Vec<Block> = up.iter().map(build).collect();
    let down: Vec<Block> = down.iter().map(build).collect();
    let zero = block_from_triplets(levels, levels, []);
    let a1_top = within[stages - 1].clone();
    let (a0, a1, a2) = if stages >= 3 {
        (up[1].clone(), within[1].clone(), down[1].clone())
    } else if stages == 2 {
        (zero.clone(), a1_top.clone(), down[1].clone())
    } else {
        (zero.clone(), a1_top.clone(), zero.clone())
    };
    for k in 2..stages {
        if down[k] != a2 {
            return Err(ChainError::StageInhomogeneous { block: "A2", stage: k });
        }
        if k + 1 < stages {
            if up[k] != a0 {
                return Err(ChainError::StageInhomogeneous { block: "A0", stage: k });
            }
            if within[k] != a1 {
                return Err(ChainError::StageInhomogeneous { block: "A1", stage: k });
            }
        }
    }
    Ok(StageBlockChain {
        a0,
        a1,
        a2,
        a1_top,
        b0: if stages > 1 { up[0].clone() } else { zero },
        b1: within[0].clone(),
        num_stages: stages,
        level_capped: chain.truncation().level_cap.is_some(),
    })
}
