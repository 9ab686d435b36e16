//! Successive lumping for chains with a down-entrance state at every level.

mod rates;
mod solve;
mod structured;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ChainError, ErrorKind};

pub use rates::{build_b, build_u_tilde, classify_variant, compute_rate_matrices, BuiltB, RateMatrixSet};
pub use solve::{
    compute_pi0, compute_s, propagate_pi, solve_qdesa, spectral_bounds, spectral_radius, Horizon, SpectralBounds, QdesaOptions, QdesaSolution,
};
pub use structured::{invert_b_structured, invert_b_structured_counted, Fallback, StructuredB};

/// Algorithm variant, ordered from most general to most specialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "qdesa")]
    Qdesa,
    #[serde(rename = "qdesa+")]
    QdesaPlus,
    #[serde(rename = "qdesa++")]
    QdesaPlusPlus,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Qdesa => "qdesa",
            Variant::QdesaPlus => "qdesa+",
            Variant::QdesaPlusPlus => "qdesa++",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlError {
    #[error(
        "successive lumping requires every down block to have a single nonzero column; \
         level {level} has nonzero columns {columns:?}"
    )]
    NotDes { level: usize, columns: Vec<usize> },
    #[error("{requested} is not applicable to this chain; the most specialised applicable variant is {available}")]
    VariantUnavailable { requested: Variant, available: Variant },
    #[error("level {level} has up transitions but no entrance state to return through")]
    NoEntrance { level: usize },
    #[error("B at level {level} is singular")]
    SingularB { level: usize },
    #[error("negative entry {value:e} in {what} at level {level}")]
    Negative {
        what: &'static str,
        level: usize,
        value: f64,
    },
    #[error("boundary system for the first level is singular")]
    SingularBoundary,
    #[error("chain is unstable: spectral radius of the interior rate matrix is {0}")]
    Unstable(f64),
    #[error("normalisation series did not converge after {0} terms")]
    Divergent(usize),
    #[error("an infinite horizon needs a chain whose last level repeats")]
    FiniteChain,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

impl SlError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            SlError::NotDes { .. } | SlError::VariantUnavailable { .. } | SlError::NoEntrance { .. } => {
                ErrorKind::Applicability
            }
            SlError::FiniteChain => ErrorKind::Input,
            SlError::Chain(e) => e.kind(),
            _ => ErrorKind::Numerical,
        }
    }
}
