//! Level-major block representation of a QBD generator.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::ChainError;
use crate::linalg::{self, block_from_triplets, Block};

/// Grid coordinates `(n, j)` of a state in the untruncated model: `n` indexes
/// the level direction, `j` the stage direction.
pub type GridState = (usize, usize);

/// Row-sum tolerance used by [`validate_generator`].
pub const ROW_SUM_TOL: f64 = 1e-12;

/// What happens above the last stored level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LevelTail {
    /// The chain stops at the last stored level.
    Finite,
    /// The last stored level repeats forever with the same blocks.
    Repeating,
}

/// Caps applied when the chain was cut out of an infinite model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TruncationMeta {
    pub level_cap: Option<usize>,
    pub stage_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelBlockChain {
    within: Vec<Block>,
    up: Vec<Block>,
    down: Vec<Block>,
    tail: LevelTail,
    entrance: Vec<Option<usize>>,
    level_homogeneous: bool,
    truncation: TruncationMeta,
    labels: Option<Vec<Vec<GridState>>>,
}

impl LevelBlockChain {
    /// `within[m]` is W_m, `up[m]` is U_m (level m to m+1) and `down[m-1]` is
    /// D_m (level m to m-1). A finite chain with M+1 levels has M up and M
    /// down blocks; a repeating chain also stores U_M.
    pub fn new(
        within: Vec<Block>,
        up: Vec<Block>,
        down: Vec<Block>,
        tail: LevelTail,
    ) -> Result<Self, ChainError> {
        let levels = within.len();
        if levels == 0 {
            return Err(ChainError::Empty);
        }
        let want_up = match tail {
            LevelTail::Finite => levels - 1,
            LevelTail::Repeating => levels,
        };
        if up.len() != want_up {
            return Err(ChainError::BlockCount {
                block: "up",
                got: up.len(),
                levels,
            });
        }
        if down.len() != levels - 1 {
            return Err(ChainError::BlockCount {
                block: "down",
                got: down.len(),
                levels,
            });
        }
        let sizes: Vec<usize> = within.iter().map(|w| w.nrows()).collect();
        for (m, w) in within.iter().enumerate() {
            check_dims("W", m, w, sizes[m], sizes[m])?;
        }
        for (m, u) in up.iter().enumerate() {
            let target = if m + 1 < levels { sizes[m + 1] } else { sizes[m] };
            check_dims("U", m, u, sizes[m], target)?;
        }
        for (k, d) in down.iter().enumerate() {
            check_dims("D", k + 1, d, sizes[k + 1], sizes[k])?;
        }
        if tail == LevelTail::Repeating && (levels < 2 || sizes[levels - 1] != sizes[levels - 2]) {
            return Err(ChainError::RepeatingTail);
        }
        let mut chain = LevelBlockChain {
            within,
            up,
            down,
            tail,
            entrance: Vec::new(),
            level_homogeneous: false,
            truncation: TruncationMeta::default(),
            labels: None,
        };
        chain.entrance = (0..levels)
            .map(|m| chain.down_at(m + 1).and_then(single_column))
            .collect();
        chain.level_homogeneous = chain.compute_homogeneity();
        Ok(chain)
    }

    pub fn with_truncation(mut self, meta: TruncationMeta) -> Self {
        self.truncation = meta;
        self
    }

    /// Attach grid coordinates to every state, level by level.
    pub fn with_labels(mut self, labels: Vec<Vec<GridState>>) -> Self {
        assert_eq!(labels.len(), self.num_levels());
        for (m, l) in labels.iter().enumerate() {
            assert_eq!(l.len(), self.level_size(m));
        }
        self.labels = Some(labels);
        self
    }

    fn compute_homogeneity(&self) -> bool {
        // U_0.., W_1.., D_1.. equal up to the top level, so that every rate
        // matrix below the top coincides.
        let levels = self.num_levels();
        let last_interior = match self.tail {
            LevelTail::Finite => levels.saturating_sub(2),
            LevelTail::Repeating => levels - 1,
        };
        if last_interior < 1 {
            return true;
        }
        self.up.iter().take(last_interior + 1).all(|u| *u == self.up[0])
            && self.within[1..=last_interior].iter().all(|w| *w == self.within[1])
            && self.down.iter().all(|d| *d == self.down[0])
    }

    /// Number of stored levels (M+1).
    pub fn num_levels(&self) -> usize {
        self.within.len()
    }

    pub fn level_size(&self, m: usize) -> usize {
        self.within_at(m).nrows()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.within.iter().map(|w| w.nrows()).collect()
    }

    /// Common level size, if every level has the same number of stages.
    pub fn stages_per_level(&self) -> Option<usize> {
        let n = self.level_size(0);
        self.within.iter().all(|w| w.nrows() == n).then_some(n)
    }

    pub fn is_uniform(&self) -> bool {
        self.stages_per_level().is_some()
    }

    pub fn num_states(&self) -> usize {
        self.level_sizes().iter().sum()
    }

    pub fn tail(&self) -> LevelTail {
        self.tail
    }

    pub fn is_finite(&self) -> bool {
        self.tail == LevelTail::Finite
    }

    pub fn level_homogeneous(&self) -> bool {
        self.level_homogeneous
    }

    pub fn truncation(&self) -> TruncationMeta {
        self.truncation
    }

    pub fn labels(&self) -> Option<&[Vec<GridState>]> {
        self.labels.as_deref()
    }

    /// Entrance stage of level `m`: the single nonzero column of D_{m+1}.
    pub fn entrance(&self, m: usize) -> Option<usize> {
        let last = self.num_levels() - 1;
        match self.tail {
            LevelTail::Repeating if m > last => self.entrance[last],
            _ => self.entrance.get(m).copied().flatten(),
        }
    }

    pub fn entrance_columns(&self) -> &[Option<usize>] {
        &self.entrance
    }

    fn resolve(&self, m: usize) -> usize {
        match self.tail {
            LevelTail::Repeating => m.min(self.num_levels() - 1),
            LevelTail::Finite => m,
        }
    }

    /// W_m; levels above the stored range resolve to the repeating level.
    pub fn within_at(&self, m: usize) -> &Block {
        &self.within[self.resolve(m)]
    }

    /// U_m, or `None` at the top of a finite chain.
    pub fn up_at(&self, m: usize) -> Option<&Block> {
        self.up.get(self.resolve(m))
    }

    /// D_m for m ≥ 1, or `None` outside the chain.
    pub fn down_at(&self, m: usize) -> Option<&Block> {
        if m == 0 {
            return None;
        }
        self.down.get(self.resolve(m) - 1)
    }

    pub fn within_blocks(&self) -> &[Block] {
        &self.within
    }

    pub fn up_blocks(&self) -> &[Block] {
        &self.up
    }

    pub fn down_blocks(&self) -> &[Block] {
        &self.down
    }

    /// Offsets of each level in the level-major state ordering.
    pub fn level_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.num_levels() + 1);
        let mut acc = 0;
        off.push(0);
        for s in self.level_sizes() {
            acc += s;
            off.push(acc);
        }
        off
    }

    /// Max-abs entry of `π Q` over levels whose balance equations are fully
    /// covered by `levels` (for a repeating chain the last supplied level is
    /// skipped since it needs the next one).
    pub fn balance_residual(&self, levels: &[Vec<f64>]) -> f64 {
        let count = levels.len();
        let last_checked = match self.tail {
            LevelTail::Finite => count,
            LevelTail::Repeating => count.saturating_sub(1),
        };
        let mut worst = 0.0_f64;
        for m in 0..last_checked {
            let mut r = linalg::vec_times_block(&levels[m], self.within_at(m));
            if m > 0 {
                if let Some(u) = self.up_at(m - 1) {
                    let v = linalg::vec_times_block(&levels[m - 1], u);
                    r.iter_mut().zip(v).for_each(|(a, b)| *a += b);
                }
            }
            if m + 1 < count {
                if let Some(d) = self.down_at(m + 1) {
                    let v = linalg::vec_times_block(&levels[m + 1], d);
                    r.iter_mut().zip(v).for_each(|(a, b)| *a += b);
                }
            }
            worst = worst.max(linalg::max_abs_slice(&r));
        }
        worst
    }

    /// Mean level drift `p U 1 - p D 1` of the interior phase process, where
    /// `p` is stationary for `D + W + U` at level 1. Negative means the level
    /// direction is positive recurrent. `None` without a uniform interior.
    pub fn level_drift(&self) -> Option<f64> {
        if !self.level_homogeneous || self.num_levels() < 3 && self.is_finite() {
            return None;
        }
        let (d, w, u) = (self.down_at(1)?, self.within_at(1), self.up_at(1)?);
        if d.ncols() != w.nrows() || u.ncols() != w.nrows() {
            return None;
        }
        let a = linalg::to_dense(d) + linalg::to_dense(w) + linalg::to_dense(u);
        let p = stationary_dense(&a)?;
        let up: f64 = linalg::row_sums(u).iter().zip(&p).map(|(r, x)| r * x).sum();
        let dn: f64 = linalg::row_sums(d).iter().zip(&p).map(|(r, x)| r * x).sum();
        Some(up - dn)
    }
}

fn check_dims(block: &'static str, level: usize, b: &Block, r: usize, c: usize) -> Result<(), ChainError> {
    if b.nrows() != r || b.ncols() != c {
        return Err(ChainError::Dimension {
            block,
            level,
            rows: b.nrows(),
            cols: b.ncols(),
            expected_rows: r,
            expected_cols: c,
        });
    }
    Ok(())
}

fn nonzero_columns(b: &Block) -> Vec<usize> {
    let cols: BTreeSet<usize> = b.triplet_iter().map(|(_, j, _)| j).collect();
    cols.into_iter().collect()
}

fn single_column(b: &Block) -> Option<usize> {
    match nonzero_columns(b).as_slice() {
        [c] => Some(*c),
        _ => None,
    }
}

/// Stationary vector of a small irreducible dense generator.
pub(crate) fn stationary_dense(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    for i in 0..n {
        m[(i, n - 1)] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    linalg::solve_row_dense(&m, &rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockKind {
    Within,
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    RowSum { level: usize, stage: usize, sum: f64 },
    NegativeRate {
        block: BlockKind,
        level: usize,
        stage: usize,
        column: usize,
        value: f64,
    },
    PositiveDiagonal { level: usize, stage: usize, value: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check conservation and sign structure of every block row.
pub fn validate_generator(chain: &LevelBlockChain) -> ValidationReport {
    let mut violations = Vec::new();
    let levels = chain.num_levels();
    for m in 0..levels {
        let n = chain.level_size(m);
        let mut sums = vec![0.0; n];
        let mut visit = |kind: BlockKind, b: &Block, sums: &mut Vec<f64>| {
            for (i, j, v) in b.triplet_iter() {
                sums[i] += v;
                let diag = kind == BlockKind::Within && i == j;
                if diag && *v > 0.0 {
                    violations.push(Violation::PositiveDiagonal {
                        level: m,
                        stage: i,
                        value: *v,
                    });
                } else if !diag && *v < 0.0 {
                    violations.push(Violation::NegativeRate {
                        block: kind,
                        level: m,
                        stage: i,
                        column: j,
                        value: *v,
                    });
                }
            }
        };
        visit(BlockKind::Within, chain.within_at(m), &mut sums);
        if let Some(u) = chain.up_at(m) {
            visit(BlockKind::Up, u, &mut sums);
        }
        if let Some(d) = chain.down_at(m) {
            visit(BlockKind::Down, d, &mut sums);
        }
        for (i, s) in sums.iter().enumerate() {
            if s.abs() > ROW_SUM_TOL {
                violations.push(Violation::RowSum {
                    level: m,
                    stage: i,
                    sum: *s,
                });
            }
        }
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum DesStatus {
    /// D_m has exactly one nonzero column.
    Entrance(usize),
    /// D_m is zero.
    NoDown,
    /// D_m has two or more nonzero columns.
    Violating(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DesReport {
    /// `(m, status of D_m)` for every stored down block.
    pub levels: Vec<(usize, DesStatus)>,
}

impl DesReport {
    pub fn is_des(&self) -> bool {
        self.levels
            .iter()
            .all(|(_, s)| !matches!(s, DesStatus::Violating(_)))
    }

    pub fn first_violation(&self) -> Option<(usize, &[usize])> {
        self.levels.iter().find_map(|(m, s)| match s {
            DesStatus::Violating(c) => Some((*m, c.as_slice())),
            _ => None,
        })
    }
}

/// Inspect each D_m for the single-nonzero-column property.
pub fn check_des_columns(chain: &LevelBlockChain) -> DesReport {
    let levels = chain
        .down_blocks()
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let cols = nonzero_columns(d);
            let status = match cols.len() {
                0 => DesStatus::NoDown,
                1 => DesStatus::Entrance(cols[0]),
                _ => DesStatus::Violating(cols),
            };
            (k + 1, status)
        })
        .collect();
    DesReport { levels }
}

/// Apply a within-level relabeling: new state `k` of level `m` is old state
/// `perms[m][k]`.
pub fn permute_stages(chain: &LevelBlockChain, perms: &[Vec<usize>]) -> Result<LevelBlockChain, ChainError> {
    let levels = chain.num_levels();
    if perms.len() != levels {
        return Err(ChainError::BlockCount {
            block: "permutation",
            got: perms.len(),
            levels,
        });
    }
    let mut inverse = Vec::with_capacity(levels);
    for (m, p) in perms.iter().enumerate() {
        let n = chain.level_size(m);
        let mut inv = vec![usize::MAX; n];
        if p.len() != n {
            return Err(ChainError::BadPermutation { level: m, size: n });
        }
        for (k, &old) in p.iter().enumerate() {
            if old >= n || inv[old] != usize::MAX {
                return Err(ChainError::BadPermutation { level: m, size: n });
            }
            inv[old] = k;
        }
        inverse.push(inv);
    }
    let last = levels - 1;
    let remap = |b: &Block, from: usize, to: usize| {
        block_from_triplets(
            b.nrows(),
            b.ncols(),
            b.triplet_iter()
                .map(|(i, j, v)| (inverse[from][i], inverse[to][j], *v)),
        )
    };
    let within = (0..levels).map(|m| remap(&chain.within[m], m, m)).collect();
    let up = chain
        .up
        .iter()
        .enumerate()
        .map(|(m, u)| remap(u, m, (m + 1).min(last)))
        .collect();
    let down = chain
        .down
        .iter()
        .enumerate()
        .map(|(k, d)| remap(d, k + 1, k))
        .collect();
    let mut out = LevelBlockChain::new(within, up, down, chain.tail)?.with_truncation(chain.truncation);
    if let Some(labels) = &chain.labels {
        let l = perms
            .iter()
            .enumerate()
            .map(|(m, p)| p.iter().map(|&old| labels[m][old]).collect())
            .collect();
        out = out.with_labels(l);
    }
    Ok(out)
}

/// Permutation that moves stage `e` to the front and keeps the others in order.
pub fn entrance_first_permutation(n: usize, e: usize) -> Vec<usize> {
    std::iter::once(e).chain((0..n).filter(|&i| i != e)).collect()
}

/// Relabel stages within each level so that every entrance sits at index 0.
/// Levels without an entrance (the top of a finite chain) reuse the
/// permutation of the level below when sizes agree.
pub fn relabel_entrance_first(chain: &LevelBlockChain) -> Result<LevelBlockChain, ChainError> {
    if let Some((level, cols)) = check_des_columns(chain).first_violation() {
        return Err(ChainError::DesViolation {
            level,
            columns: cols.to_vec(),
        });
    }
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(chain.num_levels());
    for m in 0..chain.num_levels() {
        let n = chain.level_size(m);
        let e = chain.entrance(m).or_else(|| {
            (m > 0 && chain.level_size(m - 1) == n)
                .then(|| perms[m - 1][0])
        });
        perms.push(match e {
            Some(e) => entrance_first_permutation(n, e),
            None => (0..n).collect(),
        });
    }
    permute_stages(chain, &perms)
}

/// Level-major sparse generator of a finite chain.
pub fn assemble_full_generator(chain: &LevelBlockChain) -> Result<Block, ChainError> {
    if !chain.is_finite() {
        return Err(ChainError::InfiniteChain);
    }
    let off = chain.level_offsets();
    let n = off[chain.num_levels()];
    let mut t = Vec::new();
    for m in 0..chain.num_levels() {
        let mut push = |b: &Block, to: usize| {
            for (i, j, v) in b.triplet_iter() {
                t.push((off[m] + i, off[to] + j, *v));
            }
        };
        push(chain.within_at(m), m);
        if let Some(u) = chain.up_at(m) {
            push(u, m + 1);
        }
        if let Some(d) = chain.down_at(m) {
            push(d, m - 1);
        }
    }
    Ok(block_from_triplets(n, n, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn mm1(levels: usize, lambda: f64, mu: f64) -> LevelBlockChain {
        let s = |v: f64| block_from_triplets(1, 1, [(0, 0, v)]);
        let mut within = vec![s(-lambda)];
        for _ in 1..levels - 1 {
            within.push(s(-(lambda + mu)));
        }
        within.push(s(-mu));
        LevelBlockChain::new(
            within,
            vec![s(lambda); levels - 1],
            vec![s(mu); levels - 1],
            LevelTail::Finite,
        )
        .unwrap()
    }

    #[test]
    fn mm1_validates_and_assembles() {
        let c = mm1(3, 1.0, 2.0);
        assert!(validate_generator(&c).is_empty());
        let q = linalg::to_dense(&assemble_full_generator(&c).unwrap());
        let expect = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 2.0, -3.0, 1.0, 0.0, 2.0, -2.0]);
        assert_eq!(q, expect);
        assert!(c.level_homogeneous());
    }

    #[test]
    fn row_sum_break_is_located() {
        let c = mm1(4, 1.0, 2.0);
        let mut within = c.within_blocks().to_vec();
        within[2] = block_from_triplets(1, 1, [(0, 0, -3.0 + 1e-3)]);
        let broken = LevelBlockChain::new(
            within,
            c.up_blocks().to_vec(),
            c.down_blocks().to_vec(),
            LevelTail::Finite,
        )
        .unwrap();
        let r = validate_generator(&broken);
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(r.violations[0], Violation::RowSum { level: 2, stage: 0, .. }));
    }

    #[test]
    fn dimension_mismatch_names_block() {
        let s = |n: usize| block_from_triplets(n, n, []);
        let err = LevelBlockChain::new(
            vec![s(2), s(2)],
            vec![block_from_triplets(2, 3, [])],
            vec![s(2)],
            LevelTail::Finite,
        )
        .unwrap_err();
        assert!(matches!(err, ChainError::Dimension { block: "U", level: 0, .. }));
    }

    #[test]
    fn two_column_down_is_flagged() {
        let z = block_from_triplets(3, 3, []);
        let w = block_from_triplets(3, 3, [(0, 0, -1.0), (1, 1, -1.0), (2, 2, -1.0)]);
        let d = block_from_triplets(3, 3, [(0, 0, 1.0), (1, 2, 1.0)]);
        let c = LevelBlockChain::new(vec![w.clone(), w], vec![z], vec![d], LevelTail::Finite).unwrap();
        let r = check_des_columns(&c);
        assert!(!r.is_des());
        assert_eq!(r.first_violation(), Some((1, &[0usize, 2][..])));
        assert!(matches!(relabel_entrance_first(&c), Err(ChainError::DesViolation { level: 1, .. })));
    }

    #[test]
    fn entrance_permutation_is_cyclic_for_last_stage() {
        assert_eq!(entrance_first_permutation(3, 2), vec![2, 0, 1]);
        assert_eq!(entrance_first_permutation(3, 0), vec![0, 1, 2]);
    }

    #[test]
    fn entrance_first_chain_is_unchanged() {
        let c = mm1(4, 1.0, 3.0);
        assert_eq!(relabel_entrance_first(&c).unwrap(), c);
    }
}
