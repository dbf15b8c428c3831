//! Manufactured problems, two-mesh error estimation and convergence studies.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::mesh::{build_space_mesh, build_time_mesh, shishkin_mesh, MeshError};
use crate::problem::{validate_problem, Field, ProblemError, ProblemSpec, ValidatedProblem, DEFAULT_SAMPLE_DENSITY};
use crate::solver::{march, SolveError};

/// Default two-mesh refinement factor in both space and time.
pub const DEFAULT_REFINEMENT: usize = 4;
/// Ratio between consecutive parameters in the default geometric sweeps.
pub const DEFAULT_SWEEP_RATIO: f64 = 16.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("unknown catalog id `{0}` (expected smooth_poly, smooth_trig_t_linear or layer_free_const)")]
    UnknownId(String),
    #[error("refinement must be a power of two >= 4, got {0}")]
    BadRefinement(usize),
    #[error("empty study: {0}")]
    EmptyStudy(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogId {
    /// `u_i = c_i t^2 x^2 (1-x)^2`
    SmoothPoly,
    /// `u_i = c_i (1+t) sin(pi x)`; linear in `t`, so backward differencing in time is exact.
    SmoothTrigTLinear,
    /// `u_i = 1`
    LayerFreeConst,
}

impl CatalogId {
    pub const ALL: [CatalogId; 3] = [CatalogId::SmoothPoly, CatalogId::SmoothTrigTLinear, CatalogId::LayerFreeConst];

    pub fn as_str(self) -> &'static str {
        match self {
            CatalogId::SmoothPoly => "smooth_poly",
            CatalogId::SmoothTrigTLinear => "smooth_trig_t_linear",
            CatalogId::LayerFreeConst => "layer_free_const",
        }
    }
}

impl fmt::Display for CatalogId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CatalogId {
    type Err = VerifyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CatalogId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| VerifyError::UnknownId(s.to_string()))
    }
}

/// Problem with a closed-form solution; `f` is built from it analytically.
#[derive(Debug, Clone)]
pub struct ManufacturedProblem {
    pub spec: ProblemSpec,
    pub exact: Vec<Field>,
    pub tag: CatalogId,
}

/// Tridiagonal reaction matrix with `-1` off the diagonal and unit row sums.
/// For `n = 1` this is `[1]`.
pub fn reaction_matrix(n: usize) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(n);
    for i in 0..n {
        let mut neighbours = 0.0;
        if i > 0 {
            a[(i, i - 1)] = -1.0;
            neighbours += 1.0;
        }
        if i + 1 < n {
            a[(i, i + 1)] = -1.0;
            neighbours += 1.0;
        }
        a[(i, i)] = 1.0 + neighbours;
    }
    a
}

type Profile = fn(f64) -> f64;

struct SeparableSolution {
    time: Profile,
    time_deriv: Profile,
    space: Profile,
    space_second: Profile,
}

fn separable(id: CatalogId) -> SeparableSolution {
    use std::f64::consts::PI;
    match id {
        CatalogId::SmoothPoly => SeparableSolution {
            time: |t| t * t,
            time_deriv: |t| 2.0 * t,
            space: |x| x * x * (1.0 - x) * (1.0 - x),
            space_second: |x| 2.0 - 12.0 * x + 12.0 * x * x,
        },
        CatalogId::SmoothTrigTLinear => SeparableSolution {
            time: |t| 1.0 + t,
            time_deriv: |_| 1.0,
            space: |x| (PI * x).sin(),
            space_second: |x| -PI * PI * (PI * x).sin(),
        },
        CatalogId::LayerFreeConst => SeparableSolution {
            time: |_| 1.0,
            time_deriv: |_| 0.0,
            space: |_| 1.0,
            space_second: |_| 0.0,
        },
    }
}

/// Catalog entry with the default reaction matrix and `T = 1`.
pub fn catalog(id: &str, n: usize, eps: &[f64]) -> Result<ManufacturedProblem, VerifyError> {
    let id: CatalogId = id.parse()?;
    if eps.len() != n {
        return Err(ProblemError::Malformed(format!("eps has {} entries for n = {n}", eps.len())).into());
    }
    Ok(catalog_with(id, eps, &reaction_matrix(n), 1.0))
}

/// Catalog entry for an explicit constant matrix and horizon.
pub fn catalog_with(id: CatalogId, eps: &[f64], a: &DenseMatrix, t_end: f64) -> ManufacturedProblem {
    let mut spec = ProblemSpec::with_constant_matrix(eps.to_vec(), a, t_end);
    let n = eps.len();
    let scale: Vec<f64> = match id {
        CatalogId::LayerFreeConst => vec![1.0; n],
        _ => (0..n).map(|i| 1.0 + 0.5 * i as f64).collect(),
    };
    let sol = separable(id);
    let exact: Vec<Field> = scale
        .iter()
        .map(|&c| {
            let (g, h) = (sol.time, sol.space);
            Field::new(move |x, t| c * g(t) * h(x))
        })
        .collect();
    let coefficients = spec.coefficients.clone();
    spec.source = (0..n)
        .map(|i| {
            let row: Vec<Field> = coefficients[i * n..(i + 1) * n].to_vec();
            let scale = scale.clone();
            let e = eps[i];
            let SeparableSolution {
                time: g,
                time_deriv: dg,
                space: h,
                space_second: d2h,
            } = separable(id);
            Field::new(move |x, t| {
                let coupled: f64 = row.iter().zip(&scale).map(|(a, c)| a.eval(x, t) * c).sum();
                scale[i] * (dg(t) * h(x) - e * g(t) * d2h(x)) + g(t) * h(x) * coupled
            })
        })
        .collect();
    spec.left = exact.clone();
    spec.right = exact.clone();
    spec.initial = exact.clone();
    ManufacturedProblem { spec, exact, tag: id }
}

/// Matrix used by [`layer_problem`]: `[2]` for a scalar equation, otherwise
/// [`reaction_matrix`].
pub fn layer_matrix(n: usize) -> DenseMatrix {
    if n == 1 {
        DenseMatrix::from_rows(&[vec![2.0]])
    } else {
        reaction_matrix(n)
    }
}

/// Constant coefficients, `f = 1`, homogeneous boundary and initial data.
/// The reduced solution does not match the boundary data, so every
/// component develops layers at both ends.
pub fn layer_problem(n: usize, eps: &[f64]) -> ProblemSpec {
    let mut spec = ProblemSpec::with_constant_matrix(eps.to_vec(), &layer_matrix(n), 1.0);
    spec.source = vec![Field::constant(1.0); n];
    spec
}

/// Geometric family `eps_i = eta rho^(i-1)` for `count` values of `eta`
/// spaced geometrically from the largest admissible value (the largest
/// parameter at 90% of `alpha / 36`) down to `eta_min`.
pub fn geometric_sweep(n: usize, alpha: f64, rho: f64, count: usize, eta_min: f64) -> Vec<Vec<f64>> {
    let eta_max = 0.9 * alpha / 36.0 / rho.powi(n as i32 - 1);
    let family = |eta: f64| (0..n).map(|i| eta * rho.powi(i as i32)).collect::<Vec<_>>();
    if count <= 1 {
        return vec![family(eta_max)];
    }
    let ratio = (eta_min / eta_max).ln() / (count - 1) as f64;
    (0..count).map(|k| family(eta_max * (ratio * k as f64).exp())).collect()
}

/// A problem to be measured, with its closed-form solution when known.
#[derive(Debug, Clone)]
pub struct StudyProblem {
    pub problem: ValidatedProblem,
    pub exact: Option<Vec<Field>>,
}

/// Builds the study problem for a parameter vector.
pub type ProblemFamily = Arc<dyn Fn(&[f64]) -> Result<StudyProblem, VerifyError> + Send + Sync>;

/// Family of catalog problems over the parameter vector.
pub fn catalog_family(id: CatalogId, n: usize) -> ProblemFamily {
    Arc::new(move |eps: &[f64]| {
        let m = catalog_with(id, eps, &reaction_matrix(n), 1.0);
        let problem = validate_problem(m.spec, DEFAULT_SAMPLE_DENSITY)?;
        Ok(StudyProblem {
            problem,
            exact: Some(m.exact),
        })
    })
}

/// Family of [`layer_problem`]s; no closed form.
pub fn layer_family(n: usize) -> ProblemFamily {
    Arc::new(move |eps: &[f64]| {
        let problem = validate_problem(layer_problem(n, eps), DEFAULT_SAMPLE_DENSITY)?;
        Ok(StudyProblem { problem, exact: None })
    })
}

/// Two-mesh error: max over the `(N, M)` grid of `|U^{N,M} - U^{rN,rM}|`.
/// The fine solution lives on the mesh with the coarse transition points and
/// every piece refined `r` times, so it is read off at shared nodes.
pub fn reference_error(problem: &ValidatedProblem, n_intervals: usize, m_intervals: usize, refinement: usize) -> Result<f64, VerifyError> {
    if refinement < 4 || !refinement.is_power_of_two() {
        return Err(VerifyError::BadRefinement(refinement));
    }
    let coarse = solve_on(problem, n_intervals, m_intervals)?;
    // same transition points, every piece refined: the coarse nodes are fine nodes
    let space = build_space_mesh(&coarse.space.sigma, refinement * n_intervals)?;
    let time = build_time_mesh(problem.t_end(), refinement * m_intervals)?;
    let fine = march(problem, &space, &time)?;
    let mut err = 0.0_f64;
    for (k, &t) in coarse.time.nodes.iter().enumerate() {
        for (j, &x) in coarse.space.nodes.iter().enumerate() {
            let reference = fine.evaluate(x, t)?;
            for (u, r) in coarse.at(j, k).iter().zip(&reference) {
                err = err.max((u - r).abs());
            }
        }
    }
    Ok(err)
}

/// Solves on the Shishkin mesh with `N` space and `M` time intervals.
pub fn solve_on(
    problem: &ValidatedProblem,
    n_intervals: usize,
    m_intervals: usize,
) -> Result<crate::solver::DiscreteSolution, VerifyError> {
    let space = shishkin_mesh(problem.eps(), problem.alpha, n_intervals)?;
    let time = build_time_mesh(problem.t_end(), m_intervals)?;
    Ok(march(problem, &space, &time)?)
}

/// Error of one study cell: against the closed form when available, else
/// the two-mesh estimate.
pub fn cell_error(
    study: &StudyProblem,
    n_intervals: usize,
    m_intervals: usize,
    refinement: usize,
    force_reference: bool,
) -> Result<f64, VerifyError> {
    match (&study.exact, force_reference) {
        (Some(exact), false) => Ok(solve_on(&study.problem, n_intervals, m_intervals)?.max_norm_error(exact)),
        _ => reference_error(&study.problem, n_intervals, m_intervals, refinement),
    }
}

/// The `(N, M)` cells of a study, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub cells: Vec<(usize, usize)>,
}

impl StudyPlan {
    /// Refine `N` at fixed `M`.
    pub fn space(n_list: &[usize], m: usize) -> Self {
        Self {
            cells: n_list.iter().map(|&n| (n, m)).collect(),
        }
    }

    /// Refine `M` at fixed `N`.
    pub fn time(n: usize, m_list: &[usize]) -> Self {
        Self {
            cells: m_list.iter().map(|&m| (n, m)).collect(),
        }
    }

    /// Pairs the lists elementwise when their lengths agree; a single entry
    /// in either list is held fixed.
    pub fn from_lists(n_list: &[usize], m_list: &[usize]) -> Result<Self, VerifyError> {
        match (n_list.len(), m_list.len()) {
            (0, _) | (_, 0) => Err(VerifyError::EmptyStudy("N and M lists must be non-empty".into())),
            (_, 1) => Ok(Self::space(n_list, m_list[0])),
            (1, _) => Ok(Self::time(n_list[0], m_list)),
            (a, b) if a == b => Ok(Self {
                cells: n_list.iter().copied().zip(m_list.iter().copied()).collect(),
            }),
            (a, b) => Err(VerifyError::EmptyStudy(format!(
                "N list has {a} entries and M list {b}; lengths must match or one must be 1"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    /// Index into the sweep, or `"max"` for the parameter-uniform summary.
    pub eps_id: String,
    pub n_intervals: usize,
    pub m_intervals: usize,
    pub error: f64,
    /// `log2(D(N/2) / D(N))` against the cell with half the space intervals.
    pub p: Option<f64>,
    /// `log2(D(M/2) / D(M))` against the cell with half the time intervals at the same `N`.
    pub q: Option<f64>,
    /// Space order corrected for the `N^-2 ln^3 N` rate; tends to 1.
    pub p_logcorrected: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub eps_sweep: Vec<Vec<f64>>,
    pub rows: Vec<ConvergenceRow>,
    /// Max over the sweep at each cell, with orders computed from those maxima.
    pub summary: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// Summary row for a cell.
    pub fn uniform(&self, n_intervals: usize, m_intervals: usize) -> Option<&ConvergenceRow> {
        self.summary
            .iter()
            .find(|r| r.n_intervals == n_intervals && r.m_intervals == m_intervals)
    }

    /// Per-parameter errors at one cell, in sweep order.
    pub fn errors_at(&self, n_intervals: usize, m_intervals: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.n_intervals == n_intervals && r.m_intervals == m_intervals)
            .map(|r| r.error)
            .collect()
    }
}

fn log_rate(n: f64) -> f64 {
    n.ln().powi(3) / (n * n)
}

fn fill_orders(rows: &mut [ConvergenceRow]) {
    let find =
        |rows: &[ConvergenceRow], n: usize, m: usize| rows.iter().find(|r| r.n_intervals == n && r.m_intervals == m).map(|r| r.error);
    for idx in 0..rows.len() {
        let (n, m, d) = (rows[idx].n_intervals, rows[idx].m_intervals, rows[idx].error);
        let space_prev = if n % 2 == 0 {
            find(rows, n / 2, m).or_else(|| if m % 2 == 0 { find(rows, n / 2, m / 2) } else { None })
        } else {
            None
        };
        if let Some(prev) = space_prev {
            let ratio = prev / d;
            rows[idx].p = Some(ratio.log2());
            rows[idx].p_logcorrected = Some(ratio.ln() / (log_rate((n / 2) as f64) / log_rate(n as f64)).ln());
        }
        if m % 2 == 0 {
            if let Some(prev) = find(rows, n, m / 2) {
                rows[idx].q = Some((prev / d).log2());
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StudyOptions {
    pub refinement: usize,
    /// Use the two-mesh estimate even when a closed form exists.
    pub force_reference: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            refinement: DEFAULT_REFINEMENT,
            force_reference: false,
        }
    }
}

/// Runs every `(eps, N, M)` cell (in parallel on the current rayon pool) and
/// assembles per-parameter and parameter-uniform rows with their orders.
pub fn convergence_study(
    family: &ProblemFamily,
    plan: &StudyPlan,
    eps_sweep: &[Vec<f64>],
    options: StudyOptions,
) -> Result<ConvergenceReport, VerifyError> {
    if plan.cells.is_empty() || eps_sweep.is_empty() {
        return Err(VerifyError::EmptyStudy("need at least one cell and one parameter vector".into()));
    }
    let problems: Vec<StudyProblem> = eps_sweep.iter().map(|eps| family(eps)).collect::<Result<_, _>>()?;
    let tasks: Vec<(usize, usize, usize)> = (0..problems.len())
        .flat_map(|e| plan.cells.iter().map(move |&(n, m)| (e, n, m)))
        .collect();
    let errors: Vec<f64> = tasks
        .par_iter()
        .map(|&(e, n, m)| cell_error(&problems[e], n, m, options.refinement, options.force_reference))
        .collect::<Result<_, _>>()?;

    let cells = plan.cells.len();
    let mut rows = Vec::with_capacity(tasks.len());
    for (e, chunk) in errors.chunks(cells).enumerate() {
        let mut block: Vec<ConvergenceRow> = plan
            .cells
            .iter()
            .zip(chunk)
            .map(|(&(n, m), &error)| ConvergenceRow {
                eps_id: e.to_string(),
                n_intervals: n,
                m_intervals: m,
                error,
                p: None,
                q: None,
                p_logcorrected: None,
            })
            .collect();
        fill_orders(&mut block);
        rows.extend(block);
    }
    let mut summary: Vec<ConvergenceRow> = plan
        .cells
        .iter()
        .enumerate()
        .map(|(c, &(n, m))| ConvergenceRow {
            eps_id: "max".into(),
            n_intervals: n,
            m_intervals: m,
            error: errors.iter().skip(c).step_by(cells).copied().fold(0.0, f64::max),
            p: None,
            q: None,
            p_logcorrected: None,
        })
        .collect();
    fill_orders(&mut summary);
    Ok(ConvergenceReport {
        eps_sweep: eps_sweep.to_vec(),
        rows,
        summary,
    })
}
