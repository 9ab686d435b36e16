//! Command-line surface over `qbd-core`: solve a model with a chosen method,
//! cross-compare methods, benchmark rate-matrix scaling and validate specs.

pub mod bench;
pub mod error;
pub mod method;
pub mod report;

use qbd_core::chain::{check_des_columns, validate_generator};
use qbd_core::oracle::compare_distributions;
use qbd_core::sl::classify_variant;
use serde::Serialize;

use crate::bench::{parse_sizes, run_bench, write_bench_csv, BenchFamily, BenchResult};
use crate::error::CliError;
use crate::method::{parse_methods, run_method, Method, Problem};
use crate::report::{
    write_compare_csv, write_json, write_solve_csv, CompareReport, Format, MethodOutcome, PairReport, SolveReport,
};

pub fn solve(
    spec: &str,
    method: &str,
    out: Option<&str>,
    format: Format,
    top_k: Option<usize>,
) -> Result<SolveReport, CliError> {
    let requested: Method = method.parse()?;
    let problem = Problem::from_path(spec)?;
    let run = run_method(&problem, requested)?;
    let report = SolveReport::new(&problem, requested.name(), &run, top_k);
    match format {
        Format::Json => write_json(&report, out)?,
        Format::Csv => write_solve_csv(&report, out)?,
    }
    Ok(report)
}

/// Runs every method and compares all pairs that succeeded. The report is
/// written even when a method fails; the error then decides the exit code.
pub fn compare(
    spec: &str,
    methods: &str,
    tol: f64,
    out: Option<&str>,
    format: Format,
) -> Result<(CompareReport, Option<CliError>), CliError> {
    let methods = parse_methods(methods)?;
    if methods.len() < 2 {
        return Err(CliError::Input("compare needs at least two methods".into()));
    }
    if !(tol > 0.0) {
        return Err(CliError::Input(format!("tolerance must be positive, got {tol}")));
    }
    let problem = Problem::from_path(spec)?;
    let mut outcomes = Vec::new();
    let mut runs = Vec::new();
    let mut first_error = None;
    for m in methods {
        match run_method(&problem, m) {
            Ok(run) => {
                outcomes.push(MethodOutcome {
                    method: m.to_string(),
                    method_used: Some(run.method.to_string()),
                    ok: true,
                    residual_inf: Some(run.residual_inf),
                    seconds: Some(run.seconds),
                    error: None,
                    error_kind: None,
                });
                runs.push((m, run));
            }
            Err(e) => {
                log::error!("{e}");
                outcomes.push(MethodOutcome {
                    method: m.to_string(),
                    method_used: None,
                    ok: false,
                    residual_inf: None,
                    seconds: None,
                    error: Some(e.to_string()),
                    error_kind: Some(e.kind_name().to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let mut pairs = Vec::new();
    for (i, (ma, a)) in runs.iter().enumerate() {
        for (mb, b) in &runs[i + 1..] {
            let c = compare_distributions(&a.steady, &b.steady, None, tol)
                .map_err(|e| CliError::Input(e.to_string()))?;
            pairs.push(PairReport::new(ma.name(), mb.name(), c));
        }
    }
    let failed = pairs.iter().filter(|p| !p.pass).count();
    let report = CompareReport {
        family: problem.spec.family.to_string(),
        caps: problem.spec.truncation,
        tol,
        pass: first_error.is_none() && failed == 0,
        methods: outcomes,
        pairs,
    };
    match format {
        Format::Json => write_json(&report, out)?,
        Format::Csv => write_compare_csv(&report, out)?,
    }
    if first_error.is_none() && failed > 0 {
        first_error = Some(CliError::Mismatch {
            failed,
            pairs: report.pairs.len(),
            tol,
        });
    }
    Ok((report, first_error))
}

pub fn bench(family: &str, sizes: &str, repeats: usize, threads: usize, out: Option<&str>) -> Result<BenchResult, CliError> {
    let family: BenchFamily = family.parse()?;
    let sizes = parse_sizes(sizes)?;
    let result = run_bench(family, &sizes, repeats, threads)?;
    write_bench_csv(&result, out)?;
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationSummary {
    pub family: String,
    pub num_levels: usize,
    pub num_states: usize,
    pub generator_ok: bool,
    pub generator_violations: Vec<String>,
    pub des: bool,
    pub des_violation: Option<String>,
    pub qdesa_variant: Option<String>,
    pub lpca_applicable: bool,
    pub lpca_obstacle: Option<String>,
    pub auto_method: String,
    pub stability_warning: Option<String>,
}

/// Parses the spec, builds the chain and reports which methods apply.
/// An invalid generator is an input error.
pub fn validate(spec: &str, out: Option<&str>) -> Result<ValidationSummary, CliError> {
    let problem = Problem::from_path(spec)?;
    let chain = &problem.chain;
    let gen = validate_generator(chain);
    let des = check_des_columns(chain);
    let obstacle = problem.lpca_obstacle();
    let summary = ValidationSummary {
        family: problem.spec.family.to_string(),
        num_levels: chain.num_levels(),
        num_states: chain.num_states(),
        generator_ok: gen.is_empty(),
        generator_violations: gen.violations.iter().take(20).map(|v| format!("{v:?}")).collect(),
        des: des.is_des(),
        des_violation: des
            .first_violation()
            .map(|(m, cols)| format!("down block of level {m} has nonzero columns {cols:?}")),
        qdesa_variant: des.is_des().then(|| classify_variant(chain).to_string()),
        lpca_applicable: obstacle.is_none(),
        lpca_obstacle: obstacle,
        auto_method: problem.resolve_auto().to_string(),
        stability_warning: problem.spec.stability_warning(),
    };
    write_json(&summary, out)?;
    if !summary.generator_ok {
        return Err(CliError::Input(format!(
            "generator has {} violations",
            gen.violations.len()
        )));
    }
    Ok(summary)
}
