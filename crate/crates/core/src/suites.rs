//! Randomized property suites: discrete maximum principle, stability,
//! comparison, solver oracle equivalence, M-matrix structure, mesh geometry
//! and interleaving points.
//!
//! Every suite is deterministic in its seed. Random problems use constant
//! coefficient matrices built to satisfy the dominance and sign hypotheses:
//! nonpositive off-diagonals and a diagonal equal to the off-diagonal mass
//! plus a positive margin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discrete::{apply_operator, assemble_step, MeshFunction};
use crate::linalg::{block_thomas_solve, dense_solve_oracle, m_matrix_check, BlockTridiagonalSystem, DenseMatrix};
use crate::mesh::{balance_residual, build_time_mesh, interleaving_point, layer_function, mesh_geometry_report, shishkin_mesh, LayerSide};
use crate::problem::{validate_problem, Field, ProblemSpec, ValidatedProblem};
use crate::solver::{march, march_with_data};

/// Slack allowed on sign and bound checks after floating-point solves.
pub const PROPERTY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest violation metric seen (suite specific, `<= 0` is clean for
    /// sign checks, `<= tolerance` for relative checks).
    pub worst: f64,
    pub tolerance: f64,
    /// First failing case, if any.
    pub first_failure: Option<String>,
}

impl SuiteResult {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            cases: 0,
            failures: 0,
            worst: f64::NEG_INFINITY,
            tolerance,
            first_failure: None,
        }
    }

    fn record(&mut self, metric: f64, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if metric > self.worst || metric.is_nan() {
            self.worst = metric;
        }
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Random constant matrix with nonpositive off-diagonals and strict dominance.
pub fn random_dominant_matrix(rng: &mut impl Rng, n: usize) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(n);
    for i in 0..n {
        let mut mass = 0.0;
        for j in 0..n {
            if i != j {
                let v = if rng.gen_bool(0.8) { -rng.gen_range(0.0..1.0) } else { 0.0 };
                a[(i, j)] = v;
                mass -= v;
            }
        }
        a[(i, i)] = mass + rng.gen_range(0.5..2.0);
    }
    a
}

/// Strictly increasing parameters with the largest below `alpha / 36`.
pub fn random_eps(rng: &mut impl Rng, n: usize, alpha: f64) -> Vec<f64> {
    let top = log_uniform(rng, 1e-6, 0.99 * alpha / 36.0);
    let mut eps = vec![top; n];
    for i in (0..n.saturating_sub(1)).rev() {
        eps[i] = eps[i + 1] / log_uniform(rng, 1.5, 100.0);
    }
    eps
}

/// Admissible `N = 2^(n+p+1)` for a random `p` in `p_range`.
fn random_n_intervals(rng: &mut impl Rng, n: usize, p_range: std::ops::RangeInclusive<u32>) -> usize {
    1usize << (n as u32 + rng.gen_range(p_range) + 1)
}

/// Random validated problem with constant coefficients and nonnegative
/// source, boundary and initial data.
pub fn random_nonnegative_problem(rng: &mut impl Rng, max_n: usize) -> ValidatedProblem {
    let n = rng.gen_range(1..=max_n);
    let a = random_dominant_matrix(rng, n);
    let min_sum = (0..n).map(|i| a.row(i).iter().sum::<f64>()).fold(f64::INFINITY, f64::min);
    let eps = random_eps(rng, n, 0.9 * min_sum);
    let t_end = rng.gen_range(0.5..2.0);
    let mut spec = ProblemSpec::with_constant_matrix(eps, &a, t_end);
    for i in 0..n {
        let (c, w, ph) = (rng.gen_range(0.0..2.0), rng.gen_range(1.0..8.0), rng.gen_range(0.0..3.0));
        spec.source[i] = Field::new(move |x, t| c * (1.0 + (w * x + ph * t).sin()));
        let (l, r, b) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..4.0));
        spec.left[i] = Field::new(move |_, t| l * t);
        spec.right[i] = Field::new(move |_, t| r * t * t);
        spec.initial[i] = Field::new(move |x, _| b * x * (1.0 - x));
    }
    validate_problem(spec, 8).expect("random problem satisfies the hypotheses by construction")
}

/// Random dominant block-tridiagonal system with general (signed) blocks.
pub fn random_dominant_system(rng: &mut impl Rng, n: usize, len: usize) -> BlockTridiagonalSystem {
    let block = |rng: &mut ChaCha8Rng| DenseMatrix::from_row_major(n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let mut local = ChaCha8Rng::seed_from_u64(rng.gen());
    let lower: Vec<DenseMatrix> = (1..len).map(|_| block(&mut local)).collect();
    let upper: Vec<DenseMatrix> = (1..len).map(|_| block(&mut local)).collect();
    let mut diag: Vec<DenseMatrix> = (0..len).map(|_| block(&mut local)).collect();
    for r in 0..len {
        for i in 0..n {
            let mut off: f64 = (0..n).filter(|&j| j != i).map(|j| diag[r][(i, j)].abs()).sum();
            if r > 0 {
                off += lower[r - 1].row(i).iter().map(|v| v.abs()).sum::<f64>();
            }
            if r + 1 < len {
                off += upper[r].row(i).iter().map(|v| v.abs()).sum::<f64>();
            }
            let sign = if local.gen_bool(0.5) { 1.0 } else { -1.0 };
            diag[r][(i, i)] = sign * (off + local.gen_range(0.1..2.0));
        }
    }
    let rhs = (0..len).map(|_| (0..n).map(|_| local.gen_range(-10.0..10.0)).collect()).collect();
    BlockTridiagonalSystem {
        block_size: n,
        lower,
        diag,
        upper,
        rhs,
    }
}

fn relative_difference(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let diff = a
        .iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().flatten().fold(0.0_f64, |m, y| m.max(y.abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Block Thomas against the dense oracle on random dominant systems with
/// block sizes up to 4 and lengths up to 50.
pub fn oracle_equivalence_suite(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = rng_for(seed, 1);
    let mut res = SuiteResult::new("oracle_equivalence", 1e-10);
    for case in 0..cases {
        let n = rng.gen_range(1..=4);
        let len = rng.gen_range(1..=50);
        let sys = random_dominant_system(&mut rng, n, len);
        let (thomas, dense) = match (block_thomas_solve(&sys), dense_solve_oracle(&sys)) {
            (Ok(a), Ok(b)) => (a, b),
            (a, b) => {
                res.record(f64::INFINITY, false, || {
                    format!("case {case}: solve failed: {:?} / {:?}", a.err(), b.err())
                });
                continue;
            }
        };
        let diff = relative_difference(&thomas, &dense);
        let residual = sys.residual(&thomas);
        let metric = diff.max(residual);
        res.record(metric, metric <= 1e-10, || {
            format!("case {case}: n={n} len={len} diff={diff:e} residual={residual:e}")
        });
    }
    res
}

/// Nonnegative data gives a nonnegative discrete solution.
pub fn maximum_principle_suite(seed: u64, cases: usize, n_intervals: usize, m_intervals: usize) -> SuiteResult {
    let mut rng = rng_for(seed, 2);
    let mut res = SuiteResult::new("maximum_principle", PROPERTY_SLACK);
    for case in 0..cases {
        let problem = random_nonnegative_problem(&mut rng, 3);
        let n_int = n_intervals;
        let outcome = shishkin_mesh(problem.eps(), problem.alpha, n_int)
            .map_err(|e| e.to_string())
            .and_then(|space| {
                let time = build_time_mesh(problem.t_end(), m_intervals).map_err(|e| e.to_string())?;
                march(&problem, &space, &time).map_err(|e| e.to_string())
            });
        match outcome {
            Ok(sol) => {
                let min = sol.values.values().iter().copied().fold(f64::INFINITY, f64::min);
                res.record(-min, min >= -PROPERTY_SLACK, || {
                    format!("case {case}: min U = {min:e}, eps = {:?}", problem.eps())
                });
            }
            Err(e) => res.record(f64::INFINITY, false, || format!("case {case}: {e}")),
        }
    }
    res
}

/// `max |Psi| <= max(max_boundary |Psi|, max |L Psi| / alpha)` for random
/// mesh functions. Odd cases use rough nodal noise, even cases smooth
/// solutions of signed data so that the operator term is not dominant.
pub fn stability_suite(seed: u64, cases: usize, n_intervals: usize, m_intervals: usize) -> SuiteResult {
    let mut rng = rng_for(seed, 3);
    let mut res = SuiteResult::new("discrete_stability", PROPERTY_SLACK);
    for case in 0..cases {
        let problem = random_nonnegative_problem(&mut rng, 3);
        let n = problem.n();
        let n_int = n_intervals;
        let space = shishkin_mesh(problem.eps(), problem.alpha, n_int).expect("admissible mesh");
        let time = build_time_mesh(problem.t_end(), m_intervals).expect("valid time mesh");
        let nx = space.nodes.len();
        let psi = if case % 2 == 1 {
            MeshFunction::from_fn(n, nx, time.len(), |_, _, out| {
                out.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0))
            })
        } else {
            let boundary = MeshFunction::from_fn(n, nx, time.len(), |_, _, out| {
                out.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0))
            });
            let amp: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let freq: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10.0)).collect();
            match march_with_data(&problem, &space, &time, &boundary, |_, _, x, t, out| {
                for i in 0..out.len() {
                    out[i] = amp[i] * (freq[i] * x - t).cos();
                }
            }) {
                Ok(u) => u,
                Err(e) => {
                    res.record(f64::INFINITY, false, || format!("case {case}: {e}"));
                    continue;
                }
            }
        };
        let l_psi = apply_operator(&problem, &space, &time, &psi);
        let bound = psi.boundary_max_abs().max(l_psi.interior_max_abs() / problem.alpha);
        let excess = psi.max_abs() - bound;
        res.record(excess, excess <= PROPERTY_SLACK, || {
            format!("case {case}: max|Psi| exceeds bound by {excess:e}")
        });
    }
    res
}

/// `|Z| <= Phi` on the boundary and `|L Z| <= L Phi` inside imply `|Z| <= Phi`.
/// Pairs are built by solving with dominated data.
pub fn comparison_suite(seed: u64, cases: usize, n_intervals: usize, m_intervals: usize) -> SuiteResult {
    let mut rng = rng_for(seed, 4);
    let mut res = SuiteResult::new("comparison_principle", PROPERTY_SLACK);
    for case in 0..cases {
        let problem = random_nonnegative_problem(&mut rng, 3);
        let n = problem.n();
        let n_int = n_intervals;
        let space = shishkin_mesh(problem.eps(), problem.alpha, n_int).expect("admissible mesh");
        let time = build_time_mesh(problem.t_end(), m_intervals).expect("valid time mesh");
        let nx = space.nodes.len();
        let nt = time.len();
        let z_data = MeshFunction::from_fn(n, nx, nt, |_, _, out| out.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0)));
        let slack = MeshFunction::from_fn(n, nx, nt, |_, _, out| out.iter_mut().for_each(|v| *v = rng.gen_range(0.0..0.5)));
        // z_data doubles as the interior source for Z; Phi's data dominates it
        let phi_data = MeshFunction::from_fn(n, nx, nt, |j, k, out| {
            for (i, v) in out.iter_mut().enumerate() {
                *v = z_data.get(j, k, i).abs() + slack.get(j, k, i);
            }
        });
        let z = march_with_data(&problem, &space, &time, &z_data, |j, k, _, _, out| {
            out.copy_from_slice(z_data.at(j, k))
        });
        let phi = march_with_data(&problem, &space, &time, &phi_data, |j, k, _, _, out| {
            out.copy_from_slice(phi_data.at(j, k))
        });
        let (z, phi) = match (z, phi) {
            (Ok(z), Ok(phi)) => (z, phi),
            _ => {
                res.record(f64::INFINITY, false, || format!("case {case}: solve failed"));
                continue;
            }
        };
        let excess = z
            .values()
            .iter()
            .zip(phi.values())
            .map(|(zv, pv)| zv.abs() - pv)
            .fold(f64::NEG_INFINITY, f64::max);
        res.record(excess, excess <= PROPERTY_SLACK, || {
            format!("case {case}: |Z| exceeds Phi by {excess:e}")
        });
    }
    res
}

/// Assembled systems have M-matrix structure with row margin at least `alpha + 1/dt`.
pub fn m_matrix_suite(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = rng_for(seed, 5);
    let mut res = SuiteResult::new("m_matrix_structure", PROPERTY_SLACK);
    for case in 0..cases {
        let problem = random_nonnegative_problem(&mut rng, 4);
        let n = problem.n();
        let n_int = random_n_intervals(&mut rng, n, 1..=4);
        let m_int = rng.gen_range(1..=64);
        let space = shishkin_mesh(problem.eps(), problem.alpha, n_int).expect("admissible mesh");
        let time = build_time_mesh(problem.t_end(), m_int).expect("valid time mesh");
        let k = rng.gen_range(1..=m_int);
        let prev = vec![0.0; (n_int + 1) * n];
        let sys = assemble_step(&problem, &space, &time, k, &prev);
        let report = m_matrix_check(&sys);
        let required = problem.alpha + 1.0 / time.step();
        let shortfall = required - report.min_margin;
        let ok = report.passed() && shortfall <= PROPERTY_SLACK * required;
        res.record(shortfall, ok, || format!("case {case}: {report:?}, required margin {required}"));
    }
    res
}

/// Partition, symmetry, degeneration and the exact geometric checks on
/// random Shishkin meshes.
pub fn mesh_geometry_suite(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = rng_for(seed, 6);
    let mut res = SuiteResult::new("mesh_geometry", 1e-10);
    for case in 0..cases {
        let n = rng.gen_range(1..=4);
        let alpha = rng.gen_range(0.3..3.0);
        let eps = if case % 4 == 0 {
            // large parameters: every cap is active
            let mut e = vec![alpha / 36.0; n];
            for i in (0..n.saturating_sub(1)).rev() {
                e[i] = e[i + 1] * 0.99;
            }
            e
        } else {
            random_eps(&mut rng, n, alpha)
        };
        let n_int = random_n_intervals(&mut rng, n, 1..=6);
        let mesh = match shishkin_mesh(&eps, alpha, n_int) {
            Ok(m) => m,
            Err(e) => {
                res.record(f64::INFINITY, false, || format!("case {case}: {e}"));
                continue;
            }
        };
        let mut problems = Vec::new();
        if mesh.nodes[0] != 0.0 || mesh.nodes[n_int] != 1.0 {
            problems.push("endpoints".to_string());
        }
        if mesh.nodes.windows(2).any(|w| !(w[0] < w[1])) {
            problems.push("nodes not strictly increasing".into());
        }
        if (0..=n_int / 2).any(|j| mesh.nodes[n_int - j] != 1.0 - mesh.nodes[j]) {
            problems.push("not symmetric".into());
        }
        if mesh.piece_counts.iter().sum::<usize>() != n_int {
            problems.push("piece counts".into());
        }
        let total: f64 = mesh.widths.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            problems.push(format!("widths sum to {total}"));
        }
        let ln_n = (n_int as f64).ln();
        let all_capped = mesh.sigma.iter().enumerate().all(|(r, &s)| {
            2.0 * (eps[r] / alpha).sqrt() * ln_n >= s && {
                let cap = if r + 1 < n { mesh.sigma[r + 1] / 2.0 } else { 0.25 };
                s == cap
            }
        });
        if all_capped && (!mesh.is_uniform() || mesh.widths.iter().any(|h| (h - 1.0 / n_int as f64).abs() > 1e-14)) {
            problems.push("capped mesh is not uniform".into());
        }
        let report = mesh_geometry_report(&mesh, &eps, alpha);
        if !report.passed() {
            problems.push("geometry checks failed".into());
        }
        let worst_layer = report
            .transitions
            .iter()
            .filter_map(|g| g.layer_value.map(|b| (b * (n_int * n_int) as f64 - 1.0).abs()))
            .fold(0.0, f64::max);
        res.record(worst_layer, problems.is_empty(), || {
            format!("case {case}: eps={eps:?} N={n_int}: {}", problems.join(", "))
        });
    }
    res
}

/// Crossing points of scaled layer functions: balance, bound, separation and
/// both orderings.
pub fn interleaving_suite(seed: u64, cases: usize) -> SuiteResult {
    let mut rng = rng_for(seed, 7);
    let mut res = SuiteResult::new("interleaving_points", 1e-10);
    for case in 0..cases {
        let n = rng.gen_range(2..=5);
        let alpha = rng.gen_range(0.3..3.0);
        let eps = random_eps(&mut rng, n, alpha);
        let mut worst = 0.0_f64;
        let mut problems = Vec::new();
        for s in [0.5, 1.0, 1.5] {
            let x = |i: usize, j: usize| interleaving_point(i, j, s, &eps, alpha).map(|p| p.x).unwrap_or(f64::NAN);
            for i in 0..n {
                for j in i + 1..n {
                    let point = match interleaving_point(i, j, s, &eps, alpha) {
                        Ok(p) => p,
                        Err(e) => {
                            problems.push(e.to_string());
                            continue;
                        }
                    };
                    let residual = balance_residual(&point, &eps, alpha);
                    worst = worst.max(residual);
                    if !(residual <= 1e-10) {
                        problems.push(format!("balance residual {residual:e} at ({i},{j},{s})"));
                    }
                    if !(point.x > 0.0 && point.x < 0.5 && point.x < 2.0 * s * (eps[j] / alpha).sqrt()) {
                        problems.push(format!("bound violated at ({i},{j},{s}): x={}", point.x));
                    }
                    if i + 1 < j && !(point.x < x(i + 1, j)) {
                        problems.push(format!("x({i},{j}) >= x({},{j}) at s={s}", i + 1));
                    }
                    if j + 1 < n && !(point.x < x(i, j + 1)) {
                        problems.push(format!("x({i},{j}) >= x({i},{}) at s={s}", j + 1));
                    }
                    // separation, compared in log space
                    let log_ratio = |y: f64| {
                        let li = -y * (alpha / eps[i]).sqrt() - s * eps[i].ln();
                        let lj = -y * (alpha / eps[j]).sqrt() - s * eps[j].ln();
                        li - lj
                    };
                    if !(log_ratio(point.x * (1.0 - 1e-3)) > 0.0 && log_ratio(point.x * (1.0 + 1e-3)) < 0.0) {
                        problems.push(format!("separation fails at ({i},{j},{s})"));
                    }
                    // the left-layer ordering at the crossing itself
                    let bi = layer_function(LayerSide::Left, i, point.x, &eps, alpha);
                    let bj = layer_function(LayerSide::Left, j, point.x, &eps, alpha);
                    if bi > bj {
                        problems.push(format!("B_{i} > B_{j} at crossing"));
                    }
                }
            }
        }
        res.record(worst, problems.is_empty(), || {
            format!("case {case}: eps={eps:?} alpha={alpha}: {}", problems.join("; "))
        });
    }
    res
}

/// Case counts and grid sizes used by [`run_all`].
#[derive(Debug, Clone, Copy)]
pub struct SuiteSizes {
    pub oracle_cases: usize,
    pub problem_cases: usize,
    pub mesh_cases: usize,
    pub interleaving_cases: usize,
    /// `N` for the solve-based suites; must be admissible for `n <= 3`.
    pub space_intervals: usize,
    pub time_intervals: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            oracle_cases: 200,
            problem_cases: 100,
            mesh_cases: 500,
            interleaving_cases: 1000,
            space_intervals: 64,
            time_intervals: 16,
        }
    }
}

/// Runs every suite with the given seed.
pub fn run_all(seed: u64, sizes: SuiteSizes) -> Vec<SuiteResult> {
    vec![
        maximum_principle_suite(seed, sizes.problem_cases, sizes.space_intervals, sizes.time_intervals),
        stability_suite(seed, sizes.problem_cases, sizes.space_intervals, sizes.time_intervals),
        comparison_suite(seed, sizes.problem_cases, sizes.space_intervals, sizes.time_intervals),
        oracle_equivalence_suite(seed, sizes.oracle_cases),
        m_matrix_suite(seed, sizes.problem_cases),
        mesh_geometry_suite(seed, sizes.mesh_cases),
        interleaving_suite(seed, sizes.interleaving_cases),
    ]
}
