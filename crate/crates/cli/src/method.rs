//! Solver dispatch over a parsed model.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use qbd_core::chain::check_des_columns;
use qbd_core::lpc::{jump_probabilities, solve_lpca, SERIES_TOL};
use qbd_core::models::{Family, ModelSpec};
use qbd_core::oracle::{direct_for_chain, direct_steady_state};
use qbd_core::sl::{classify_variant, solve_qdesa, QdesaOptions, Variant};
use qbd_core::stage::transpose_to_stage_view;
use qbd_core::{LevelBlockChain, SteadyState};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "qdesa")]
    Qdesa,
    #[serde(rename = "qdesa+")]
    QdesaPlus,
    #[serde(rename = "qdesa++")]
    QdesaPlusPlus,
    #[serde(rename = "lpca")]
    Lpca,
    #[serde(rename = "direct")]
    Direct,
    #[serde(rename = "auto")]
    Auto,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Qdesa,
        Method::QdesaPlus,
        Method::QdesaPlusPlus,
        Method::Lpca,
        Method::Direct,
        Method::Auto,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Qdesa => "qdesa",
            Method::QdesaPlus => "qdesa+",
            Method::QdesaPlusPlus => "qdesa++",
            Method::Lpca => "lpca",
            Method::Direct => "direct",
            Method::Auto => "auto",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::Qdesa => Some(Variant::Qdesa),
            Method::QdesaPlus => Some(Variant::QdesaPlus),
            Method::QdesaPlusPlus => Some(Variant::QdesaPlusPlus),
            _ => None,
        }
    }

    fn from_variant(v: Variant) -> Self {
        match v {
            Variant::Qdesa => Method::Qdesa,
            Variant::QdesaPlus => Method::QdesaPlus,
            Variant::QdesaPlusPlus => Method::QdesaPlusPlus,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| {
                CliError::Input(format!(
                    "unknown method '{s}'; expected one of qdesa, qdesa+, qdesa++, lpca, direct, auto"
                ))
            })
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>, CliError> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// A parsed spec together with its level-partitioned chain.
pub struct Problem {
    pub spec: ModelSpec,
    pub chain: LevelBlockChain,
    pub build_seconds: f64,
}

impl Problem {
    pub fn from_spec(spec: ModelSpec) -> Result<Self, CliError> {
        let start = Instant::now();
        let chain = spec
            .build_chain()
            .map_err(|e| CliError::from_kind(e.kind(), "model", e.to_string()))?;
        Ok(Problem {
            spec,
            chain,
            build_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn from_path(path: &str) -> Result<Self, CliError> {
        Problem::from_spec(read_spec(path)?)
    }

    /// Grid label `(n, j)` of every state in level-major order, if known.
    pub fn labels(&self) -> Option<Vec<(usize, usize)>> {
        self.chain.labels().map(|l| l.iter().flatten().copied().collect())
    }

    /// Why LPCA cannot be applied, or `None` when it can.
    pub fn lpca_obstacle(&self) -> Option<String> {
        transpose_to_stage_view(&self.chain)
            .map_err(qbd_core::lpc::LpcError::from)
            .and_then(|s| jump_probabilities(&s))
            .err()
            .map(|e| e.to_string())
    }

    /// First applicable method in the order qdesa++, qdesa+, qdesa, lpca, direct.
    pub fn resolve_auto(&self) -> Method {
        if check_des_columns(&self.chain).is_des() {
            Method::from_variant(classify_variant(&self.chain))
        } else if self.lpca_obstacle().is_none() {
            Method::Lpca
        } else {
            Method::Direct
        }
    }
}

pub fn read_spec(path: &str) -> Result<ModelSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ModelSpec::from_json(&text).map_err(|e| CliError::Input(e.to_string()))
}

/// Outcome of one solver on a problem. `steady` is level-major.
#[derive(Debug, Clone)]
pub struct Run {
    pub method: Method,
    pub variant: Option<Variant>,
    pub steady: SteadyState,
    /// Residual reported by the solver itself.
    pub residual_inf: f64,
    /// `‖πQ‖∞` against the truncated chain.
    pub chain_residual_inf: f64,
    pub seconds: f64,
    pub spectral_radius: Option<f64>,
    pub ops: Option<u64>,
}

pub fn run_method(problem: &Problem, requested: Method) -> Result<Run, CliError> {
    let method = match requested {
        Method::Auto => problem.resolve_auto(),
        m => m,
    };
    let chain = &problem.chain;
    let name = method.name();
    let start = Instant::now();
    let (steady, variant, rho, ops) = match method {
        Method::Qdesa | Method::QdesaPlus | Method::QdesaPlusPlus => {
            let opts = QdesaOptions {
                variant: method.variant(),
                ..QdesaOptions::default()
            };
            let sol = solve_qdesa(chain, &opts).map_err(|e| CliError::from_kind(e.kind(), name, e.to_string()))?;
            (sol.steady, Some(sol.variant), sol.spectral_radius, Some(sol.ops))
        }
        Method::Lpca => {
            let sol = solve_lpca(chain, SERIES_TOL).map_err(|e| CliError::from_kind(e.kind(), name, e.to_string()))?;
            (sol.steady, None, None, Some(sol.ops))
        }
        Method::Direct => (direct(problem)?, None, None, None),
        Method::Auto => unreachable!("auto resolved above"),
    };
    let seconds = start.elapsed().as_secs_f64();
    Ok(Run {
        method,
        variant,
        residual_inf: steady.residual_inf,
        chain_residual_inf: chain.balance_residual(&steady.level_vectors),
        steady,
        seconds,
        spectral_radius: rho,
        ops,
    })
}

/// Direct solve. Model families use their own grid generator, so the result
/// does not depend on the level partition.
fn direct(problem: &Problem) -> Result<SteadyState, CliError> {
    let fail = |e: qbd_core::oracle::OracleError| CliError::from_kind(e.kind(), "direct", e.to_string());
    if problem.spec.family == Family::Raw {
        return direct_for_chain(&problem.chain).map_err(fail);
    }
    let (q, states) = problem
        .spec
        .full_generator()
        .map_err(|e| CliError::from_kind(e.kind(), "direct", e.to_string()))?;
    let grid = direct_steady_state(&q).map_err(fail)?;
    let flat = grid.flatten();
    let index: HashMap<(usize, usize), usize> = states
        .unwrap_or_default()
        .into_iter()
        .enumerate()
        .map(|(k, s)| (s, k))
        .collect();
    let labels = problem
        .labels()
        .ok_or_else(|| CliError::Input("chain has no grid labels".into()))?;
    let level_major: Vec<f64> = labels.iter().map(|s| flat[index[s]]).collect();
    let levels = SteadyState::split(&level_major, &problem.chain.level_sizes());
    Ok(SteadyState::new(levels, grid.residual_inf, 0.0))
}
