//! Rate matrix of lattice-path-countable chains from weighted path counts.

mod phi;
mod rhat;
mod series;
mod steady;

use serde::Serialize;
use thiserror::Error;

use crate::chain::LevelBlockChain;
use crate::error::{ChainError, ErrorKind};
use crate::stage::{transpose_to_stage_view, StageBlockChain};
use crate::steady::SteadyState;

pub use phi::{direction_name, homogeneous_stage_blocks, jump_probabilities, JumpProbabilities};
pub use rhat::{compute_rhat, compute_rhat_counted, LpcRateMatrix};
pub use series::{
    binomial_exact, compute_g, compute_g_bounded, compute_g_counted, compute_kappa, ln_binomial, ln_catalan,
    SeriesStats,
};
pub use steady::lpc_steady_state;

/// Default relative tolerance of the G series.
pub const SERIES_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpcError {
    #[error(
        "LPC condition violated: transition in direction {direction} at level {level}; \
         only <0,1>, <0,-1>, <1,-1>, <1,0>, <1,1> are allowed (no 'NW', 'W' or 'SW' moves)"
    )]
    Violation { direction: String, level: usize },
    #[error("interior is not homogeneous: rate {direction} at level {level} differs from level 0")]
    Inhomogeneous { level: usize, direction: &'static str },
    #[error(
        "interior not uniformizable to a zero-self-loop jump chain: exit rate {rate} at level {level}, expected {expected}"
    )]
    NotUniformizable { level: usize, rate: f64, expected: f64 },
    #[error("level sets are not homogeneous: {0}")]
    Structure(ChainError),
    #[error("invalid jump probabilities: {0}")]
    InvalidPhi(String),
    #[error("series for G_{h} did not converge after {terms} terms")]
    Divergent { h: u64, terms: u64 },
    #[error("kappa recursion is singular (1 - phi<0,1> G_0 = {0:e})")]
    SingularKappa(f64),
    #[error("chain is unstable: {0}")]
    UnstableDrift(String),
    #[error("chain is unstable: spectral radius of the rate matrix is {0}")]
    Unstable(f64),
    #[error("rate matrix has dimension {rhat} but the chain has {levels} levels")]
    Dimension { rhat: usize, levels: usize },
    #[error("stage view needs at least 3 stages, got {0}")]
    TooFewStages(usize),
    #[error("boundary system is singular")]
    SingularBoundary,
    #[error("negative probability {value:e} at stage {stage}")]
    Negative { stage: usize, value: f64 },
}

impl LpcError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            LpcError::Violation { .. }
            | LpcError::Inhomogeneous { .. }
            | LpcError::NotUniformizable { .. }
            | LpcError::Structure(_) => ErrorKind::Applicability,
            LpcError::InvalidPhi(_) | LpcError::Dimension { .. } | LpcError::TooFewStages(_) => ErrorKind::Input,
            _ => ErrorKind::Numerical,
        }
    }
}

impl From<ChainError> for LpcError {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::NotStageQbd { level, from, to } => LpcError::Violation {
                direction: direction_name(0, to as isize - from as isize),
                level,
            },
            other => LpcError::Structure(other),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LpcaSolution {
    /// Level-major distribution over the chain's stage window.
    pub steady: SteadyState,
    pub rhat: LpcRateMatrix,
    pub phi: JumpProbabilities,
    pub exit_rate: f64,
    pub special_case: bool,
    pub ops: u64,
}

/// Stage-view solve of a finite chain, reported level-major.
pub fn solve_lpca(chain: &LevelBlockChain, tol: f64) -> Result<LpcaSolution, LpcError> {
    let stage = transpose_to_stage_view(chain)?;
    let (phi, exit_rate) = jump_probabilities(&stage)?;
    if let Some(drift) = chain.level_drift() {
        if chain.truncation().level_cap.is_some() && drift >= 0.0 {
            return Err(LpcError::UnstableDrift(format!("level drift {drift} is not negative")));
        }
    }
    let (rhat, stats) = compute_rhat_counted(&phi, stage.num_levels(), tol)?;
    let by_stage = lpc_steady_state(&stage, &rhat)?;
    let steady = stage_to_level_major(&stage, &by_stage);
    Ok(LpcaSolution {
        steady,
        rhat,
        phi,
        exit_rate,
        special_case: stats.special_case,
        ops: stats.ops,
    })
}

fn stage_to_level_major(stage: &StageBlockChain, s: &SteadyState) -> SteadyState {
    let levels = (0..stage.num_levels())
        .map(|m| s.level_vectors.iter().map(|v| v[m]).collect())
        .collect();
    SteadyState::new(levels, s.residual_inf, s.tail_mass)
}
