//! JSON and CSV reports.
//!
//! JSON numbers use the shortest representation that parses back to the same
//! `f64`. CSV probabilities are written with 17 significant digits.

use std::io::Write;

use qbd_core::oracle::ComparisonReport;
use qbd_core::truncate::Caps;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::method::{Problem, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateProbability {
    pub level: usize,
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub build_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub family: String,
    pub method_requested: String,
    pub method_used: String,
    pub variant: Option<String>,
    pub caps: Caps,
    pub num_levels: usize,
    pub num_states: usize,
    pub residual_inf: f64,
    pub chain_residual_inf: f64,
    pub tail_mass: f64,
    pub truncation_mass: f64,
    pub total_mass: f64,
    pub spectral_radius: Option<f64>,
    pub ops: Option<u64>,
    pub timings: Timings,
    pub warnings: Vec<String>,
    /// Number of states kept when the distribution is cut to the largest ones.
    pub top_k: Option<usize>,
    pub distribution: Vec<StateProbability>,
}

impl SolveReport {
    pub fn new(problem: &Problem, requested: &str, run: &Run, top_k: Option<usize>) -> Self {
        let labels = problem.labels();
        let mut distribution = Vec::with_capacity(run.steady.num_states());
        let mut k = 0;
        for (level, v) in run.steady.level_vectors.iter().enumerate() {
            for (index, &p) in v.iter().enumerate() {
                let label = labels.as_ref().map(|l| l[k]);
                distribution.push(StateProbability {
                    level,
                    index,
                    n: label.map(|s| s.0),
                    j: label.map(|s| s.1),
                    probability: p,
                });
                k += 1;
            }
        }
        if let Some(top) = top_k {
            // stable sort keeps level-major order among ties
            distribution.sort_by(|a, b| b.probability.total_cmp(&a.probability));
            distribution.truncate(top);
        }
        let mut warnings = Vec::new();
        if let Some(w) = problem.spec.stability_warning() {
            warnings.push(w);
        }
        if run.residual_inf > 1e-10 {
            warnings.push(format!("solver residual {:e} exceeds 1e-10", run.residual_inf));
        }
        SolveReport {
            family: problem.spec.family.to_string(),
            method_requested: requested.to_string(),
            method_used: run.method.to_string(),
            variant: run.variant.map(|v| v.to_string()),
            caps: problem.spec.truncation,
            num_levels: run.steady.num_levels(),
            num_states: run.steady.num_states(),
            residual_inf: run.residual_inf,
            chain_residual_inf: run.chain_residual_inf,
            tail_mass: run.steady.tail_mass,
            truncation_mass: run.steady.truncation_mass,
            total_mass: run.steady.total(),
            spectral_radius: run.spectral_radius,
            ops: run.ops,
            timings: Timings {
                build_seconds: problem.build_seconds,
                solve_seconds: run.seconds,
            },
            warnings,
            top_k,
            distribution,
        }
    }
}

/// Result of one method inside a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    pub method_used: Option<String>,
    pub ok: bool,
    pub residual_inf: Option<f64>,
    pub seconds: Option<f64>,
    pub error: Option<String>,
    pub error_kind: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub a: String,
    pub b: String,
    pub linf_error: f64,
    pub l1_error: f64,
    pub per_level_max: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

impl PairReport {
    pub fn new(a: &str, b: &str, c: ComparisonReport) -> Self {
        PairReport {
            a: a.to_string(),
            b: b.to_string(),
            linf_error: c.linf_error,
            l1_error: c.l1_error,
            per_level_max: c.per_level_max,
            tol: c.tol,
            pass: c.pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub family: String,
    pub caps: Caps,
    pub tol: f64,
    pub methods: Vec<MethodOutcome>,
    pub pairs: Vec<PairReport>,
    pub pass: bool,
}

/// `x` with 17 significant digits.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes to `path`, or stdout when `path` is `None`.
pub fn sink(path: Option<&str>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(std::io::stdout()),
    })
}

pub fn write_json<T: Serialize>(value: &T, path: Option<&str>) -> Result<(), CliError> {
    let mut out = sink(path)?;
    let where_ = path.unwrap_or("stdout");
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io(where_, e.into()))?;
    writeln!(out).map_err(|e| CliError::io(where_, e))
}

/// CSV columns: `level,index,n,j,probability`.
pub fn write_solve_csv(report: &SolveReport, path: Option<&str>) -> Result<(), CliError> {
    let where_ = path.unwrap_or("stdout");
    let mut w = csv::Writer::from_writer(sink(path)?);
    let err = |e: csv::Error| CliError::io(where_, e.into());
    w.write_record(["level", "index", "n", "j", "probability"]).map_err(err)?;
    for s in &report.distribution {
        w.write_record([
            s.level.to_string(),
            s.index.to_string(),
            opt(s.n),
            opt(s.j),
            sig17(s.probability),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(where_, e))
}

/// CSV columns: `a,b,linf_error,l1_error,tol,pass`.
pub fn write_compare_csv(report: &CompareReport, path: Option<&str>) -> Result<(), CliError> {
    let where_ = path.unwrap_or("stdout");
    let mut w = csv::Writer::from_writer(sink(path)?);
    let err = |e: csv::Error| CliError::io(where_, e.into());
    w.write_record(["a", "b", "linf_error", "l1_error", "tol", "pass"]).map_err(err)?;
    for p in &report.pairs {
        w.write_record([
            p.a.clone(),
            p.b.clone(),
            sig17(p.linf_error),
            sig17(p.l1_error),
            sig17(p.tol),
            p.pass.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(where_, e))
}
