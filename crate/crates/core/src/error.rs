use thiserror::Error;

/// Broad failure category, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The method does not apply to the chain (structure requirement unmet).
    Applicability,
    /// The method applies but the computation failed.
    Numerical,
    /// Malformed input.
    Input,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("block {block} of level {level} is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Dimension {
        block: &'static str,
        level: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("chain needs at least one level")]
    Empty,
    #[error("{block} block count {got} does not fit {levels} levels")]
    BlockCount {
        block: &'static str,
        got: usize,
        levels: usize,
    },
    #[error("repeating tail needs the last two levels to have equal size")]
    RepeatingTail,
    #[error("{which} cap {cap} is below the minimum of 2")]
    CapTooSmall { which: &'static str, cap: usize },
    #[error("level {level} is DES-violating: down block has nonzero columns {columns:?}")]
    DesViolation { level: usize, columns: Vec<usize> },
    #[error("not stage-QBD: level {level} moves from stage {from} to stage {to}")]
    NotStageQbd { level: usize, from: usize, to: usize },
    #[error("stage blocks are not homogeneous: {block} at stage {stage} differs from stage 1")]
    StageInhomogeneous { block: &'static str, stage: usize },
    #[error("level sizes differ ({first} vs {other} at level {level}); a uniform stage count is required")]
    NonUniform {
        first: usize,
        other: usize,
        level: usize,
    },
    #[error("not level-QBD: transition from {from:?} to {to:?} spans more than one level")]
    NotLevelQbd { from: (usize, usize), to: (usize, usize) },
    #[error("state {0:?} appears in no level set")]
    Unpartitioned((usize, usize)),
    #[error("operation requires a finite chain")]
    InfiniteChain,
    #[error("model does not declare where its levels become homogeneous")]
    NoRepeatingLevel,
    #[error("permutation for level {level} is not a permutation of 0..{size}")]
    BadPermutation { level: usize, size: usize },
}

impl ChainError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ChainError::DesViolation { .. }
            | ChainError::NotStageQbd { .. }
            | ChainError::StageInhomogeneous { .. }
            | ChainError::NonUniform { .. }
            | ChainError::NotLevelQbd { .. }
            | ChainError::InfiniteChain
            | ChainError::NoRepeatingLevel => ErrorKind::Applicability,
            _ => ErrorKind::Input,
        }
    }
}
