//! Scaling benchmarks of the rate-matrix computations.
//!
//! Each cell times the rate matrix of one algorithm at one size: `R` for the
//! successive-lumping solver (size = level size ℓ, stages unbounded) and
//! `R̂` for lattice path counting (size = number of levels M). A full solve is
//! run once per cell, untimed, for the residual.

use std::str::FromStr;
use std::time::Instant;

use qbd_core::lpc::{compute_rhat_counted, jump_probabilities, solve_lpca, JumpProbabilities, SERIES_TOL};
use qbd_core::models::Priority;
use qbd_core::sl::{compute_rate_matrices, solve_qdesa, QdesaOptions, Variant};
use qbd_core::stage::transpose_to_stage_view;
use qbd_core::truncate::{truncate_chain, truncate_stages, Caps, UnboundedChain};
use qbd_core::{GridState, LevelBlockChain};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;

/// Stage window used when LPCA needs a finite chain to report on.
const LPCA_WINDOW: usize = 8;
/// Largest M for which the LPCA cell also runs the dense boundary solve.
const LPCA_SOLVE_LIMIT: usize = 512;
/// Relative spread of the repeats above which a cell is flagged.
const SPREAD_WARN: f64 = 0.2;
const MIN_REPEATS_FOR_SLOPE: usize = 3;
const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchFamily {
    /// Priority queue: `qdesa++` over ℓ and `lpca` over M.
    Priority,
    /// Synthetic chain with all five interior directions: `lpca` over M.
    LpcGeneral,
}

impl BenchFamily {
    pub fn name(self) -> &'static str {
        match self {
            BenchFamily::Priority => "priority",
            BenchFamily::LpcGeneral => "lpc-general",
        }
    }

    pub fn algorithms(self) -> &'static [&'static str] {
        match self {
            BenchFamily::Priority => &["qdesa++", "lpca"],
            BenchFamily::LpcGeneral => &["lpca"],
        }
    }
}

impl FromStr for BenchFamily {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "priority" => Ok(BenchFamily::Priority),
            "lpc-general" | "general" => Ok(BenchFamily::LpcGeneral),
            other => Err(CliError::Input(format!(
                "unknown bench family '{other}'; expected priority or lpc-general"
            ))),
        }
    }
}

/// Synthetic chain on `(n, j)` whose interior moves in all five directions
/// `⟨1,−1⟩, ⟨1,0⟩, ⟨1,1⟩, ⟨0,1⟩, ⟨0,−1⟩`. Stage 0 returns to level `n − 1`
/// at rate `ret`, which keeps the level direction recurrent. With
/// `level_cap`, a move past the last level keeps its stage change and stays
/// on the last level, which lumps all higher levels into it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralLpc {
    pub rates: [f64; 5],
    pub ret: f64,
    pub level_cap: Option<usize>,
}

impl Default for GeneralLpc {
    fn default() -> Self {
        GeneralLpc {
            rates: [0.1, 0.15, 0.1, 0.25, 0.4],
            ret: 2.0,
            level_cap: None,
        }
    }
}

impl GeneralLpc {
    pub fn capped(levels: usize) -> Self {
        GeneralLpc {
            level_cap: Some(levels),
            ..GeneralLpc::default()
        }
    }
}

impl UnboundedChain for GeneralLpc {
    fn transitions(&self, (n, j): GridState) -> Vec<(GridState, f64)> {
        let [se, e, ne, nn, s] = self.rates;
        let mut moves = vec![((1, 0), e), ((1, 1), ne), ((0, 1), nn)];
        if j > 0 {
            moves.push(((1, -1), se));
            moves.push(((0, -1), s));
        }
        let top = self.level_cap.is_some_and(|cap| n + 1 >= cap);
        let mut out: Vec<(GridState, f64)> = Vec::new();
        for ((dn, dj), rate) in moves {
            let dn = if top { 0 } else { dn };
            if (dn, dj) == (0, 0) {
                continue;
            }
            let to = (n + dn, (j as i64 + dj) as usize);
            match out.iter_mut().find(|(t, _)| *t == to) {
                Some(slot) => slot.1 += rate,
                None => out.push((to, rate)),
            }
        }
        if j == 0 && n > 0 {
            out.push(((n - 1, 0), self.ret));
        }
        out
    }

    fn homogeneous_from(&self) -> Option<usize> {
        Some(1)
    }
}

pub fn priority_model() -> Priority {
    Priority {
        lambda1: 0.2,
        lambda2: 0.3,
        mu: 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub algorithm: String,
    pub family: String,
    pub size: usize,
    /// Median wall-clock seconds of the rate-matrix computation.
    pub seconds: f64,
    /// (max − min) / median over the repeats.
    pub spread: f64,
    pub repeats: usize,
    /// Arithmetic operation count of the rate-matrix computation.
    pub ops: u64,
    pub residual_inf: Option<f64>,
    pub ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeSummary {
    pub algorithm: String,
    pub family: String,
    pub points: usize,
    pub slope_seconds: Option<f64>,
    pub slope_ops: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub records: Vec<BenchRecord>,
    pub slopes: Vec<SlopeSummary>,
}

impl BenchResult {
    pub fn slope(&self, algorithm: &str) -> Option<&SlopeSummary> {
        self.slopes.iter().find(|s| s.algorithm == algorithm)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn parse_sizes(list: &str) -> Result<Vec<usize>, CliError> {
    let sizes = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Input(format!("size '{s}' is not a positive integer")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if sizes.len() < MIN_POINTS {
        return Err(CliError::Input(format!("need at least {MIN_POINTS} sizes, got {}", sizes.len())));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] < 3 {
        return Err(CliError::Input("sizes must be strictly increasing and at least 3".into()));
    }
    Ok(sizes)
}

struct Sample {
    ops: u64,
    residual: Option<f64>,
}

/// Untimed preparation of one cell; returns a closure computing the rate
/// matrix and the cell's residual.
fn prepare(
    family: BenchFamily,
    algorithm: &str,
    size: usize,
) -> Result<(Box<dyn Fn() -> Result<u64, String> + Send + Sync>, Option<f64>), String> {
    let lpca = |model: &dyn UnboundedChain| -> Result<_, String> {
        let chain = truncate_chain(model, Caps::new(size, LPCA_WINDOW)).map_err(|e| e.to_string())?;
        let stage = transpose_to_stage_view(&chain).map_err(|e| e.to_string())?;
        let (phi, _) = jump_probabilities(&stage).map_err(|e| e.to_string())?;
        let residual = lpca_residual(&chain, size)?;
        let timed = move || compute_rhat_counted(&phi, size, SERIES_TOL).map(|(_, s)| s.ops).map_err(|e| e.to_string());
        Ok((boxed(timed), residual))
    };
    match (family, algorithm) {
        (BenchFamily::Priority, "qdesa++") => {
            let chain = truncate_stages(&priority_model(), size).map_err(|e| e.to_string())?;
            let sol = solve_qdesa(&chain, &QdesaOptions::default()).map_err(|e| e.to_string())?;
            let timed = move || {
                compute_rate_matrices(&chain, Variant::QdesaPlusPlus)
                    .map(|r| r.ops)
                    .map_err(|e| e.to_string())
            };
            Ok((boxed(timed), Some(sol.steady.residual_inf)))
        }
        (BenchFamily::Priority, "lpca") => lpca(&priority_model()),
        (BenchFamily::LpcGeneral, "lpca") => lpca(&GeneralLpc::capped(size)),
        _ => Err(format!("algorithm {algorithm} is not benchmarked on {}", family.name())),
    }
}

fn boxed<F: Fn() -> Result<u64, String> + Send + Sync + 'static>(
    f: F,
) -> Box<dyn Fn() -> Result<u64, String> + Send + Sync> {
    Box::new(f)
}

fn lpca_residual(chain: &LevelBlockChain, size: usize) -> Result<Option<f64>, String> {
    if size > LPCA_SOLVE_LIMIT {
        return Ok(None);
    }
    let sol = solve_lpca(chain, SERIES_TOL).map_err(|e| e.to_string())?;
    Ok(Some(sol.steady.residual_inf))
}

fn run_cell(family: BenchFamily, algorithm: &str, size: usize, repeats: usize) -> BenchRecord {
    let mut record = BenchRecord {
        algorithm: algorithm.to_string(),
        family: family.name().to_string(),
        size,
        seconds: f64::NAN,
        spread: f64::NAN,
        repeats,
        ops: 0,
        residual_inf: None,
        ok: false,
        error: None,
    };
    let result = prepare(family, algorithm, size).and_then(|(timed, residual)| {
        let mut times = Vec::with_capacity(repeats);
        let mut ops = 0;
        for _ in 0..repeats {
            let start = Instant::now();
            ops = timed()?;
            times.push(start.elapsed().as_secs_f64());
        }
        Ok((times, Sample { ops, residual }))
    });
    match result {
        Ok((mut times, sample)) => {
            times.sort_by(f64::total_cmp);
            let median = times[times.len() / 2];
            record.seconds = median.max(f64::MIN_POSITIVE);
            record.spread = (times[times.len() - 1] - times[0]) / record.seconds;
            record.ops = sample.ops;
            record.residual_inf = sample.residual;
            record.ok = true;
            if record.spread > SPREAD_WARN {
                log::warn!(
                    "{algorithm} at size {size}: repeat spread {:.0}% exceeds {:.0}%",
                    100.0 * record.spread,
                    100.0 * SPREAD_WARN
                );
            }
        }
        Err(e) => record.error = Some(e),
    }
    record
}

/// Runs every (algorithm, size) cell of `family` on a pool of `threads`
/// workers; each cell is timed single-threaded.
pub fn run_bench(family: BenchFamily, sizes: &[usize], repeats: usize, threads: usize) -> Result<BenchResult, CliError> {
    if repeats == 0 {
        return Err(CliError::Input("repeats must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    let cells: Vec<(&str, usize)> = family
        .algorithms()
        .iter()
        .flat_map(|a| sizes.iter().map(move |&s| (*a, s)))
        .collect();
    let records: Vec<BenchRecord> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(a, s)| run_cell(family, a, s, repeats))
            .collect()
    });
    let slopes = family
        .algorithms()
        .iter()
        .map(|&a| summarize(family, a, &records, repeats))
        .collect();
    Ok(BenchResult { records, slopes })
}

fn summarize(family: BenchFamily, algorithm: &str, records: &[BenchRecord], repeats: usize) -> SlopeSummary {
    let ok: Vec<&BenchRecord> = records.iter().filter(|r| r.algorithm == algorithm && r.ok).collect();
    let enough = ok.len() >= MIN_POINTS;
    let time_pts: Vec<(f64, f64)> = ok.iter().map(|r| (r.size as f64, r.seconds)).collect();
    let op_pts: Vec<(f64, f64)> = ok.iter().map(|r| (r.size as f64, r.ops as f64)).collect();
    if repeats < MIN_REPEATS_FOR_SLOPE {
        log::warn!("{algorithm}: fewer than {MIN_REPEATS_FOR_SLOPE} repeats, no timing slope");
    }
    SlopeSummary {
        algorithm: algorithm.to_string(),
        family: family.name().to_string(),
        points: ok.len(),
        slope_seconds: (enough && repeats >= MIN_REPEATS_FOR_SLOPE)
            .then(|| loglog_slope(&time_pts))
            .flatten(),
        slope_ops: enough.then(|| loglog_slope(&op_pts)).flatten(),
    }
}

/// Flat CSV row; summary rows have `kind = slope`.
#[derive(Serialize)]
struct Row<'a> {
    kind: &'static str,
    algorithm: &'a str,
    family: &'a str,
    size: Option<usize>,
    seconds: Option<String>,
    spread: Option<String>,
    repeats: Option<usize>,
    ops: Option<u64>,
    residual_inf: Option<String>,
    status: &'static str,
    error: Option<&'a str>,
    points: Option<usize>,
    slope_seconds: Option<String>,
    slope_ops: Option<String>,
}

/// CSV columns: `kind,algorithm,family,size,seconds,spread,repeats,ops,
/// residual_inf,status,error,points,slope_seconds,slope_ops`.
pub fn write_bench_csv(result: &BenchResult, path: Option<&str>) -> Result<(), CliError> {
    use crate::report::{sig17, sink};
    let where_ = path.unwrap_or("stdout");
    let err = |e: csv::Error| CliError::io(where_, e.into());
    let mut w = csv::Writer::from_writer(sink(path)?);
    for r in &result.records {
        w.serialize(Row {
            kind: "record",
            algorithm: &r.algorithm,
            family: &r.family,
            size: Some(r.size),
            seconds: r.ok.then(|| sig17(r.seconds)),
            spread: r.ok.then(|| sig17(r.spread)),
            repeats: Some(r.repeats),
            ops: r.ok.then_some(r.ops),
            residual_inf: r.residual_inf.map(sig17),
            status: if r.ok { "ok" } else { "failed" },
            error: r.error.as_deref(),
            points: None,
            slope_seconds: None,
            slope_ops: None,
        })
        .map_err(err)?;
    }
    for s in &result.slopes {
        w.serialize(Row {
            kind: "slope",
            algorithm: &s.algorithm,
            family: &s.family,
            size: None,
            seconds: None,
            spread: None,
            repeats: None,
            ops: None,
            residual_inf: None,
            status: if s.slope_ops.is_some() { "ok" } else { "failed" },
            error: None,
            points: Some(s.points),
            slope_seconds: s.slope_seconds.map(sig17),
            slope_ops: s.slope_ops.map(sig17),
        })
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(where_, e))
}

/// Jump probabilities of [`GeneralLpc::default`], for tests.
pub fn general_phi() -> JumpProbabilities {
    let chain = truncate_chain(&GeneralLpc::capped(4), Caps::new(4, LPCA_WINDOW)).expect("valid caps");
    let stage = transpose_to_stage_view(&chain).expect("stage qbd");
    jump_probabilities(&stage).expect("homogeneous").0
}
