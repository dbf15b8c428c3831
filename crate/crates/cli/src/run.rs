//! Command orchestration and artifact emission.
//!
//! Every command returns a JSON summary and writes its files only after all
//! parallel work has joined, so artifacts do not depend on scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use shishkin::mesh::mesh_geometry_report;
use shishkin::problem::{compute_alpha, validate_problem_with_alpha};
use shishkin::suites::{run_all, SuiteResult, SuiteSizes};
use shishkin::verify::{geometric_sweep, ProblemFamily, StudyOptions, StudyPlan, StudyProblem};
use shishkin::{build_time_mesh, convergence_study, march, shishkin_mesh, ConvergenceReport, ProblemError, ValidatedProblem, VerifyError};

use crate::config::{problem_error, Command, Format, ProblemConfig, RunConfig, SchemaError};

pub const DEFAULT_SEED: u64 = 42;
pub const OUT_ENV: &str = "SHISHKIN_OUT";

/// Machine-readable failure, printed as JSON on stderr.
#[derive(Debug, Clone, Serialize, thiserror::Error)]
#[error("{kind}: {message}")]
pub struct CliError {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            path: None,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self }).to_string()
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        Self {
            kind: e.kind,
            path: Some(e.path),
            message: e.message,
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Problem(p) => problem_error(&p).into(),
            other => Self::new("solve", other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        kind: "io".into(),
        path: Some(path.display().to_string()),
        message: e.to_string(),
    }
}

/// Settings that come from the command line rather than the document.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Output directory: the flag, then the config, then `SHISHKIN_OUT`, then `out`.
pub fn resolve_out_dir(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Debug, Clone)]
pub struct Outcome {
    /// Every requested check passed.
    pub passed: bool,
    pub summary: Value,
    pub files: Vec<PathBuf>,
}

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        fs::create_dir_all(self.dir).map_err(|e| io_error(self.dir, e))?;
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
        text.push('\n');
        self.write(name, &text)
    }
}

fn problem_section(cfg: &RunConfig) -> &ProblemConfig {
    cfg.problem.as_ref().expect("checked by check_for")
}

fn validate_at(cfg: &RunConfig, problem: &ProblemConfig, eps: &[f64]) -> Result<StudyProblem, CliError> {
    let (spec, exact) = problem.build(eps)?;
    let problem = validate_problem_with_alpha(spec, cfg.sample_density, problem.alpha).map_err(|e| CliError::from(problem_error(&e)))?;
    Ok(StudyProblem { problem, exact })
}

fn family(cfg: &RunConfig) -> ProblemFamily {
    let problem = problem_section(cfg).clone();
    let density = cfg.sample_density;
    Arc::new(move |eps: &[f64]| {
        let (spec, exact) = problem.build(eps).map_err(|e| ProblemError::Malformed(e.to_string()))?;
        let problem = validate_problem_with_alpha(spec, density, problem.alpha)?;
        Ok(StudyProblem { problem, exact })
    })
}

/// Explicit sweep, generated families, or just the problem's own parameters.
fn eps_sweep(cfg: &RunConfig) -> Result<Vec<Vec<f64>>, CliError> {
    let problem = problem_section(cfg);
    let study = cfg.study.as_ref();
    if let Some(sweep) = study.and_then(|s| s.eps_sweep.clone()) {
        return Ok(sweep);
    }
    if let Some(fam) = study.and_then(|s| s.eps_families.as_ref()) {
        let alpha = match problem.alpha {
            Some(a) => a,
            None => {
                let (spec, _) = problem.build(&problem.eps)?;
                compute_alpha(&spec, cfg.sample_density).map_err(|e| CliError::from(problem_error(&e)))?
            }
        };
        return Ok(geometric_sweep(problem.n, alpha, fam.ratio, fam.count, fam.eta_min));
    }
    Ok(vec![problem.eps.clone()])
}

fn study_options(cfg: &RunConfig) -> StudyOptions {
    let mut options = StudyOptions::default();
    if let Some(study) = &cfg.study {
        options.refinement = study.refinement;
        options.force_reference = study.force_reference;
    }
    options
}

pub fn run(command: Command, cfg: &RunConfig, ctx: &RunContext) -> Result<Outcome, CliError> {
    cfg.check_for(command)?;
    let mut writer = Writer {
        dir: &ctx.out_dir,
        files: Vec::new(),
    };
    let (passed, summary) = match command {
        Command::Validate => validate(cfg, &mut writer)?,
        Command::Solve => solve(cfg, &mut writer)?,
        Command::Convergence => convergence(cfg, &mut writer)?,
        Command::Sweep => sweep(cfg, &mut writer)?,
        Command::Selftest => selftest(cfg, ctx.seed, &mut writer)?,
    };
    Ok(Outcome {
        passed,
        summary,
        files: writer.files,
    })
}

fn validate(cfg: &RunConfig, writer: &mut Writer) -> Result<(bool, Value), CliError> {
    let problem = problem_section(cfg);
    let study = validate_at(cfg, problem, &problem.eps)?;
    let mut summary = json!({ "command": "validate", "passed": true, "problem": study.problem.report() });
    let mut passed = true;
    if let Some(mesh_cfg) = &cfg.mesh {
        let (big_n, _) = mesh_cfg.cell();
        let mesh = shishkin_mesh(study.problem.eps(), study.problem.alpha, big_n).map_err(|e| CliError::new("mesh", e.to_string()))?;
        let geometry = mesh_geometry_report(&mesh, study.problem.eps(), study.problem.alpha);
        passed = geometry.passed();
        summary["passed"] = json!(passed);
        summary["mesh"] = json!({
            "N": big_n,
            "p": mesh.p,
            "sigma": mesh.sigma,
            "piece_counts": mesh.piece_counts,
            "change_points": mesh.change_points,
            "geometry": geometry,
        });
    }
    if cfg.output.wants(Format::Json) {
        writer.json("validate.json", &summary)?;
    }
    Ok((passed, summary))
}

fn solution_csv(sol: &shishkin::DiscreteSolution) -> String {
    let mut out = String::from("x,t,i,U\n");
    for (k, &t) in sol.time.nodes.iter().enumerate() {
        for (j, &x) in sol.space.nodes.iter().enumerate() {
            for (i, &u) in sol.at(j, k).iter().enumerate() {
                let _ = writeln!(out, "{},{},{i},{}", fmt_float(x), fmt_float(t), fmt_float(u));
            }
        }
    }
    out
}

fn mesh_csv(sol: &shishkin::DiscreteSolution) -> String {
    let mut out = String::from("axis,index,coordinate\n");
    for (j, &x) in sol.space.nodes.iter().enumerate() {
        let _ = writeln!(out, "x,{j},{}", fmt_float(x));
    }
    for (k, &t) in sol.time.nodes.iter().enumerate() {
        let _ = writeln!(out, "t,{k},{}", fmt_float(t));
    }
    out
}

fn solve(cfg: &RunConfig, writer: &mut Writer) -> Result<(bool, Value), CliError> {
    let problem = problem_section(cfg);
    let study = validate_at(cfg, problem, &problem.eps)?;
    let vp: &ValidatedProblem = &study.problem;
    let (big_n, big_m) = cfg.mesh.as_ref().expect("checked by check_for").cell();
    let space = shishkin_mesh(vp.eps(), vp.alpha, big_n).map_err(|e| CliError::new("mesh", e.to_string()))?;
    let time = build_time_mesh(vp.t_end(), big_m).map_err(|e| CliError::new("mesh", e.to_string()))?;
    let sol = march(vp, &space, &time).map_err(|e| CliError::new("solve", e.to_string()))?;

    let max_error = study.exact.as_ref().map(|exact| sol.max_norm_error(exact));
    let finite = sol.values.values().iter().all(|v| v.is_finite());
    let summary = json!({
        "command": "solve",
        "passed": finite,
        "problem": vp.report(),
        "N": big_n,
        "M": big_m,
        "sigma": space.sigma,
        "max_abs": sol.values.max_abs(),
        "max_error": max_error,
        "relative_residual": sol.interior_residual() / sol.operator_scale().max(f64::MIN_POSITIVE),
    });
    if cfg.output.wants(Format::Csv) {
        writer.write("solution.csv", &solution_csv(&sol))?;
        writer.write("mesh.csv", &mesh_csv(&sol))?;
    }
    if cfg.output.wants(Format::Profiles) {
        let last = time.intervals;
        for i in 0..vp.n() {
            let mut out = String::from("x,U\n");
            for (j, &x) in space.nodes.iter().enumerate() {
                let _ = writeln!(out, "{},{}", fmt_float(x), fmt_float(sol.at(j, last)[i]));
            }
            writer.write(&format!("profile_{i}.csv"), &out)?;
        }
    }
    if cfg.output.wants(Format::Json) {
        writer.json("solve.json", &summary)?;
    }
    Ok((finite, summary))
}

pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("eps_id,N,M,error,p,q,p_logcorrected\n");
    for r in report.rows.iter().chain(&report.summary) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.eps_id,
            r.n_intervals,
            r.m_intervals,
            fmt_float(r.error),
            fmt_opt(r.p),
            fmt_opt(r.q),
            fmt_opt(r.p_logcorrected)
        );
    }
    out
}

fn convergence(cfg: &RunConfig, writer: &mut Writer) -> Result<(bool, Value), CliError> {
    let study = cfg.study.as_ref().expect("checked by check_for");
    let plan = StudyPlan::from_lists(&study.n_list, &study.m_list).map_err(|e| CliError {
        path: Some("$.study".into()),
        ..CliError::new("schema", e.to_string())
    })?;
    let sweep = eps_sweep(cfg)?;
    let report = convergence_study(&family(cfg), &plan, &sweep, study_options(cfg))?;
    let passed = report.rows.iter().all(|r| r.error.is_finite());
    let summary = json!({
        "command": "convergence",
        "passed": passed,
        "eps_sweep": report.eps_sweep,
        "summary": report.summary,
    });
    if cfg.output.wants(Format::Csv) {
        writer.write("convergence.csv", &convergence_csv(&report))?;
    }
    if cfg.output.wants(Format::Json) {
        writer.json(
            "convergence.json",
            &json!({ "command": "convergence", "passed": passed, "report": report }),
        )?;
    }
    Ok((passed, summary))
}

fn sweep(cfg: &RunConfig, writer: &mut Writer) -> Result<(bool, Value), CliError> {
    let (big_n, big_m) = cfg.mesh.as_ref().expect("checked by check_for").cell();
    let sweep = eps_sweep(cfg)?;
    let report = convergence_study(&family(cfg), &StudyPlan::space(&[big_n], big_m), &sweep, study_options(cfg))?;
    let errors = report.errors_at(big_n, big_m);
    let max = errors.iter().copied().fold(0.0, f64::max);
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let passed = errors.iter().all(|e| e.is_finite());
    let summary = json!({
        "command": "sweep",
        "passed": passed,
        "N": big_n,
        "M": big_m,
        "eps_sweep": sweep,
        "errors": errors,
        "max_error": max,
        "min_error": min,
        "variation": if min > 0.0 { max / min } else { f64::INFINITY },
    });
    if cfg.output.wants(Format::Csv) {
        let n = problem_section(cfg).n;
        let mut out = String::from("eps_id,N,M,error");
        for i in 1..=n {
            let _ = write!(out, ",eps_{i}");
        }
        out.push('\n');
        for (id, (eps, err)) in sweep.iter().zip(&errors).enumerate() {
            let _ = write!(out, "{id},{big_n},{big_m},{}", fmt_float(*err));
            for e in eps {
                let _ = write!(out, ",{}", fmt_float(*e));
            }
            out.push('\n');
        }
        writer.write("sweep.csv", &out)?;
    }
    if cfg.output.wants(Format::Json) {
        writer.json("sweep.json", &summary)?;
    }
    Ok((passed, summary))
}

pub fn selftest_csv(results: &[SuiteResult]) -> String {
    let mut out = String::from("suite,cases,failures,worst,tolerance,passed\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.name,
            r.cases,
            r.failures,
            fmt_float(r.worst),
            fmt_float(r.tolerance),
            r.passed()
        );
    }
    out
}

fn selftest(cfg: &RunConfig, seed: u64, writer: &mut Writer) -> Result<(bool, Value), CliError> {
    let results = run_all(seed, SuiteSizes::default());
    let passed = results.iter().all(SuiteResult::passed);
    let summary = json!({
        "command": "selftest",
        "passed": passed,
        "seed": seed,
        "suites": results.iter().map(|r| json!({
            "name": r.name,
            "cases": r.cases,
            "failures": r.failures,
            "passed": r.passed(),
            "first_failure": r.first_failure,
        })).collect::<Vec<_>>(),
    });
    if cfg.output.wants(Format::Csv) {
        writer.write("selftest.csv", &selftest_csv(&results))?;
    }
    if cfg.output.wants(Format::Json) {
        writer.json(
            "selftest.json",
            &json!({ "command": "selftest", "passed": passed, "seed": seed, "suites": results }),
        )?;
    }
    Ok((passed, summary))
}
