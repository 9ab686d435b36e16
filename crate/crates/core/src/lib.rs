//! Stationary distributions of level-structured quasi-birth-and-death chains.
//!
//! Chains are described by [`chain::LevelBlockChain`]. The successive-lumping
//! solver lives in [`sl`], the lattice-path rate matrix in [`lpc`], reference
//! solvers in [`oracle`] and the queueing model builders in [`models`].

pub mod chain;
pub mod error;
pub mod linalg;
pub mod lpc;
pub mod models;
pub mod oracle;
pub mod sl;
pub mod stage;
pub mod steady;
pub mod truncate;

pub use chain::{GridState, LevelBlockChain, LevelTail, TruncationMeta};
pub use error::{ChainError, ErrorKind};
pub use stage::StageBlockChain;
pub use steady::SteadyState;
pub use truncate::{Caps, UnboundedChain};
