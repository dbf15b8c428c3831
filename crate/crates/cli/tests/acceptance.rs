//! Acceptance criteria, one PASS/FAIL line each. Runs with `cargo test`
//! (or `cargo test -p shishkin-cli --test acceptance`) and exits nonzero if
//! any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use shishkin::mesh::{build_space_mesh, layer_function, transition_points, LayerSide};
use shishkin::suites::{interleaving_suite, maximum_principle_suite, oracle_equivalence_suite, stability_suite, SuiteResult};
use shishkin::verify::{catalog_family, geometric_sweep, layer_family, CatalogId, StudyOptions, StudyPlan};
use shishkin::{convergence_study, ConvergenceReport};

const SEED: u64 = 42;

struct Check {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Check {
    Check {
        passed,
        detail: detail.into(),
    }
}

fn suite_detail(r: &SuiteResult) -> String {
    let mut s = format!("{}: {}/{} clean, worst {:.3e}", r.name, r.cases - r.failures, r.cases, r.worst);
    if let Some(f) = &r.first_failure {
        s.push_str(&format!(" (first failure: {f})"));
    }
    s
}

fn mesh_degeneration() -> Check {
    let eps = [0.016, 0.0225];
    let mesh = transition_points(&eps, 0.9, 16).and_then(|s| build_space_mesh(&s, 16));
    match mesh {
        Ok(mesh) => {
            let worst = mesh.widths.iter().map(|h| (h - 1.0 / 16.0).abs()).fold(0.0, f64::max);
            check(
                worst <= 1e-14 && mesh.change_points.is_empty(),
                format!("max |h - 1/16| = {worst:.1e}, {} change points", mesh.change_points.len()),
            )
        }
        Err(e) => check(false, e.to_string()),
    }
}

fn transition_exactness() -> Check {
    let (eps, alpha, big_n) = ([1e-6, 1e-4], 0.9, 64usize);
    let sigma = match transition_points(&eps, alpha, big_n) {
        Ok(s) => s,
        Err(e) => return check(false, e.to_string()),
    };
    let six = |v: f64| format!("{v:.5e}");
    let digits_ok = six(sigma[0]) == six(0.0087677) && six(sigma[1]) == six(0.087677);
    let b = layer_function(LayerSide::Left, 1, sigma[1], &eps, alpha);
    let target = (big_n as f64).powi(-2);
    let rel = (b - target).abs() / target;
    check(
        digits_ok && rel <= 1e-10,
        format!("sigma = ({}, {}), |B_2(sigma_2) N^2 - 1| = {rel:.1e}", six(sigma[0]), six(sigma[1])),
    )
}

fn suite_check(results: &[SuiteResult]) -> Check {
    check(
        results.iter().all(SuiteResult::passed),
        results.iter().map(suite_detail).collect::<Vec<_>>().join("; "),
    )
}

fn uniform_rows(report: &ConvergenceReport) -> String {
    report
        .summary
        .iter()
        .map(|r| {
            let order = r.p.or(r.q).map(|o| format!(" order {o:.3}")).unwrap_or_default();
            format!("(N={}, M={}) {:.3e}{order}", r.n_intervals, r.m_intervals, r.error)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn space_order() -> Check {
    let mut ok = true;
    let mut details = Vec::new();
    for n in [1, 2] {
        let sweep = geometric_sweep(n, 0.9, 16.0, 6, 1e-8);
        let plan = StudyPlan::space(&[64, 128, 256, 512], 4);
        match convergence_study(
            &catalog_family(CatalogId::SmoothTrigTLinear, n),
            &plan,
            &sweep,
            StudyOptions::default(),
        ) {
            Ok(report) => {
                let p = report.uniform(512, 4).and_then(|r| r.p).unwrap_or(f64::NAN);
                ok &= p >= 1.8;
                details.push(format!("n={n}, {} families: p(512) = {p:.4}", sweep.len()));
            }
            Err(e) => {
                ok = false;
                details.push(format!("n={n}: {e}"));
            }
        }
    }
    check(ok, details.join("; "))
}

fn time_order() -> Check {
    let mut ok = true;
    let mut details = Vec::new();
    for n in [1, 2] {
        let sweep = geometric_sweep(n, 0.9, 16.0, 5, 1e-8);
        let plan = StudyPlan::time(512, &[8, 16, 32, 64, 128, 256]);
        match convergence_study(&catalog_family(CatalogId::SmoothPoly, n), &plan, &sweep, StudyOptions::default()) {
            Ok(report) => {
                let q = report.uniform(512, 256).and_then(|r| r.q).unwrap_or(f64::NAN);
                ok &= (0.9..=1.1).contains(&q);
                details.push(format!("n={n}: q(256) = {q:.4}"));
            }
            Err(e) => {
                ok = false;
                details.push(format!("n={n}: {e}"));
            }
        }
    }
    check(ok, details.join("; "))
}

fn layer_convergence() -> Check {
    let sweep = geometric_sweep(2, 0.9, 16.0, 9, 1e-7);
    let smallest = sweep.last().map(|e| e[0]).unwrap_or(f64::NAN);
    let cells = [(128, 32), (256, 64), (512, 128)];
    let plan = StudyPlan { cells: cells.to_vec() };
    let report = match convergence_study(&layer_family(2), &plan, &sweep, StudyOptions::default()) {
        Ok(r) => r,
        Err(e) => return check(false, e.to_string()),
    };
    let uniform: Vec<f64> = cells
        .iter()
        .map(|&(n, m)| report.uniform(n, m).map_or(f64::NAN, |r| r.error))
        .collect();
    let decreasing = uniform.windows(2).all(|w| w[1] < w[0]);
    let orders: Vec<f64> = cells[1..]
        .iter()
        .map(|&(n, m)| report.uniform(n, m).and_then(|r| r.p_logcorrected).unwrap_or(f64::NAN))
        .collect();
    let orders_ok = orders.iter().all(|p| (0.8..=1.2).contains(p));
    let variation: Vec<f64> = cells
        .iter()
        .map(|&(n, m)| {
            let errs = report.errors_at(n, m);
            let max = errs.iter().copied().fold(0.0, f64::max);
            let min = errs.iter().copied().fold(f64::INFINITY, f64::min);
            max / min
        })
        .collect();
    let variation_ok = variation.iter().all(|v| *v < 4.0);
    check(
        decreasing && orders_ok && variation_ok && (smallest - 1e-7).abs() <= 1e-12 && sweep.len() == 9,
        format!(
            "eps_1 down to {smallest:.1e}; {}; log-corrected orders {:?}; max/min across sweep {:?}",
            uniform_rows(&report),
            orders.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>(),
            variation.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>()
        ),
    )
}

fn cli_selftest() -> Check {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return check(false, e.to_string()),
    };
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_shishkin"))
            .args(["selftest", "--seed", &SEED.to_string(), "--out"])
            .arg(&out)
            .env_remove("SHISHKIN_OUT")
            .output();
        match status {
            Ok(o) if o.status.success() => {}
            Ok(o) => {
                return check(
                    false,
                    format!(
                        "run {run} exited with {:?}: {}",
                        o.status.code(),
                        String::from_utf8_lossy(&o.stderr)
                    ),
                )
            }
            Err(e) => return check(false, e.to_string()),
        }
        match std::fs::read(out.join("selftest.csv")) {
            Ok(bytes) => csvs.push(bytes),
            Err(e) => return check(false, e.to_string()),
        }
    }
    let suites = String::from_utf8_lossy(&csvs[0]).lines().count() - 1;
    check(
        csvs[0] == csvs[1],
        format!("exit 0 twice, {suites} suites, selftest.csv byte-identical: {}", csvs[0] == csvs[1]),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Duration, Box<dyn Fn() -> Check>);
    let criteria: Vec<Criterion> = vec![
        ("mesh degeneration", Duration::from_secs(1), Box::new(mesh_degeneration)),
        ("transition-point exactness", Duration::from_secs(1), Box::new(transition_exactness)),
        (
            "interleaving-point suite",
            Duration::from_secs(5),
            Box::new(|| suite_check(&[interleaving_suite(SEED, 1000)])),
        ),
        (
            "solver oracle equivalence",
            Duration::from_secs(10),
            Box::new(|| suite_check(&[oracle_equivalence_suite(SEED, 200)])),
        ),
        (
            "discrete maximum principle and stability",
            Duration::from_secs(60),
            Box::new(|| suite_check(&[maximum_principle_suite(SEED, 100, 64, 16), stability_suite(SEED, 100, 64, 16)])),
        ),
        ("space order", Duration::from_secs(120), Box::new(space_order)),
        ("time order", Duration::from_secs(120), Box::new(time_order)),
        (
            "parameter-uniform layer convergence",
            Duration::from_secs(600),
            Box::new(layer_convergence),
        ),
        ("CLI selftest", Duration::from_secs(300), Box::new(cli_selftest)),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let passed = result.passed && in_time;
        if !passed {
            failed += 1;
        }
        let timing = format!(
            "{:.2}s of {}s{}",
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
        println!(
            "{} [{}] {name}: {} ({timing})",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            result.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
