//! The continuous initial-boundary value problem
//!
//! ```text
//!   u_t - E u_xx + A(x,t) u = f(x,t)   on (0,1) x (0,T]
//! ```
//!
//! with `E = diag(eps)`, Dirichlet data on `x = 0`, `x = 1` and initial data
//! at `t = 0`, together with the structural checks the scheme relies on.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::mesh::TimeMesh;

/// Default sample density per axis for checking the coefficient inequalities.
pub const DEFAULT_SAMPLE_DENSITY: usize = 64;
/// Factor applied to the sampled minimum row sum to obtain alpha.
pub const ALPHA_SAFETY: f64 = 0.9;
/// Absolute tolerance for corner compatibility of boundary and initial data.
pub const CORNER_TOL: f64 = 1e-10;
/// Minimum relative gap between consecutive diffusion parameters.
pub const MIN_RELATIVE_GAP: f64 = 1e-12;

/// Scalar function of `(x, t)`. Must be pure; it is evaluated from worker threads.
#[derive(Clone)]
pub struct Field(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl Field {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Field(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Field::new(move |_, _| c)
    }

    #[inline]
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        (self.0)(x, t)
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Field(..)")
    }
}

/// The continuous problem data.
///
/// `left` and `right` are evaluated as `g(0, t)` and `g(1, t)`, `initial` as
/// `g(x, 0)`; the unused argument of each boundary field is ignored.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub eps: Vec<f64>,
    /// Row-major `n x n` coefficient entries `a_ij(x, t)`.
    pub coefficients: Vec<Field>,
    pub source: Vec<Field>,
    pub left: Vec<Field>,
    pub right: Vec<Field>,
    pub initial: Vec<Field>,
    pub t_end: f64,
}

impl ProblemSpec {
    pub fn n(&self) -> usize {
        self.eps.len()
    }

    /// Builds a spec with a constant coefficient matrix.
    pub fn with_constant_matrix(eps: Vec<f64>, a: &DenseMatrix, t_end: f64) -> Self {
        let n = eps.len();
        assert_eq!(a.size(), n);
        let zero = || vec![Field::constant(0.0); n];
        ProblemSpec {
            coefficients: a.as_slice().iter().map(|&v| Field::constant(v)).collect(),
            source: zero(),
            left: zero(),
            right: zero(),
            initial: zero(),
            eps,
            t_end,
        }
    }

    pub fn coefficient_matrix(&self, x: f64, t: f64) -> DenseMatrix {
        let n = self.n();
        DenseMatrix::from_row_major(n, self.coefficients.iter().map(|a| a.eval(x, t)).collect())
    }

    pub fn source_into(&self, x: f64, t: f64, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.source) {
            *o = f.eval(x, t);
        }
    }

    pub fn left_into(&self, t: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.left) {
            *o = g.eval(0.0, t);
        }
    }

    pub fn right_into(&self, t: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.right) {
            *o = g.eval(1.0, t);
        }
    }

    pub fn initial_into(&self, x: f64, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.initial) {
            *o = g.eval(x, 0.0);
        }
    }

    fn check_shape(&self) -> Result<(), ProblemError> {
        let n = self.n();
        if n == 0 {
            return Err(ProblemError::Malformed("system size must be positive".into()));
        }
        let lens = [
            ("coefficients", self.coefficients.len(), n * n),
            ("source", self.source.len(), n),
            ("left", self.left.len(), n),
            ("right", self.right.len(), n),
            ("initial", self.initial.len(), n),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(ProblemError::Malformed(format!("{name} has {got} entries, expected {want}")));
            }
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(ProblemError::Malformed(format!(
                "time horizon must be positive, got {}",
                self.t_end
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("eps[{index}] = {value} must lie in (0, 1]")]
    EpsOutOfRange { index: usize, value: f64 },
    #[error("diffusion parameters {i} and {j} are not strictly increasing with relative gap >= 1e-12 ({a} vs {b})")]
    CoincidentParameters { i: usize, j: usize, a: f64, b: f64 },
    #[error("component {component}: {which} corner mismatch, boundary {boundary} vs initial {initial}")]
    CornerMismatch {
        component: usize,
        which: &'static str,
        boundary: f64,
        initial: f64,
    },
    #[error("row {row} is not strictly diagonally dominant at (x, t) = ({x}, {t})")]
    DominanceViolation { row: usize, x: f64, t: f64 },
    #[error("off-diagonal a[{row}][{col}] = {value} is positive at (x, t) = ({x}, {t})")]
    SignViolation {
        row: usize,
        col: usize,
        value: f64,
        x: f64,
        t: f64,
    },
    #[error("minimum row sum {min_row_sum} is not positive (row {row} at (x, t) = ({x}, {t}))")]
    NonPositiveRowSum { min_row_sum: f64, row: usize, x: f64, t: f64 },
    #[error("alpha = {actual} too small: max eps requires alpha >= {required}")]
    AlphaTooSmall { required: f64, actual: f64 },
    #[error("alpha override {alpha} must lie in (0, {min_row_sum})")]
    BadAlphaOverride { alpha: f64, min_row_sum: f64 },
    #[error("problem data is not finite at (x, t) = ({x}, {t}): {what}")]
    NonFinite { what: String, x: f64, t: f64 },
    #[error("sample density must be at least 2, got {0}")]
    BadSampleDensity(usize),
}

/// A problem whose coefficient inequalities were checked on a sample grid.
#[derive(Clone, Debug)]
pub struct ValidatedProblem {
    pub spec: ProblemSpec,
    pub alpha: f64,
    pub sample_grid: Vec<(f64, f64)>,
}

impl ValidatedProblem {
    /// Wraps `spec` without checking any hypothesis. Operator-level
    /// experiments use this for data outside the validated class, such as
    /// `eps = 1`.
    pub fn assume_valid(spec: ProblemSpec, alpha: f64) -> Self {
        ValidatedProblem {
            spec,
            alpha,
            sample_grid: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn eps(&self) -> &[f64] {
        &self.spec.eps
    }

    pub fn t_end(&self) -> f64 {
        self.spec.t_end
    }

    /// Summary suitable for printing.
    pub fn report(&self) -> ValidationReport {
        let min_row_sum = min_row_sum(&self.spec, &self.sample_grid).0;
        ValidationReport {
            n: self.n(),
            eps: self.spec.eps.clone(),
            t_end: self.spec.t_end,
            alpha: self.alpha,
            min_row_sum,
            max_sqrt_eps: self.spec.eps.iter().fold(0.0_f64, |m, e| m.max(e.sqrt())),
            sqrt_alpha_over_six: self.alpha.sqrt() / 6.0,
            sample_points: self.sample_grid.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub eps: Vec<f64>,
    pub t_end: f64,
    pub alpha: f64,
    pub min_row_sum: f64,
    pub max_sqrt_eps: f64,
    pub sqrt_alpha_over_six: f64,
    pub sample_points: usize,
}

/// Uniform `density x density` grid over `[0,1] x [0,T]`, including the edges.
pub fn sample_grid(t_end: f64, density: usize) -> Vec<(f64, f64)> {
    let last = (density - 1) as f64;
    let mut pts = Vec::with_capacity(density * density);
    for b in 0..density {
        let t = t_end * b as f64 / last;
        for a in 0..density {
            pts.push((a as f64 / last, t));
        }
    }
    pts
}

fn check_eps(eps: &[f64]) -> Result<(), ProblemError> {
    for (index, &value) in eps.iter().enumerate() {
        if !(value > 0.0 && value <= 1.0) {
            return Err(ProblemError::EpsOutOfRange { index, value });
        }
    }
    for (i, w) in eps.windows(2).enumerate() {
        if !(w[1] - w[0] >= MIN_RELATIVE_GAP * w[1]) || w[1] <= w[0] {
            return Err(ProblemError::CoincidentParameters {
                i,
                j: i + 1,
                a: w[0],
                b: w[1],
            });
        }
    }
    Ok(())
}

/// Strictly increasing, each in `(0, 1]`, relative gaps at least `1e-12`.
pub fn validate_eps(eps: &[f64]) -> Result<(), ProblemError> {
    if eps.is_empty() {
        return Err(ProblemError::Malformed("eps must be non-empty".into()));
    }
    check_eps(eps)
}

fn check_corners(spec: &ProblemSpec) -> Result<(), ProblemError> {
    let n = spec.n();
    let mut b0 = vec![0.0; n];
    let mut b1 = vec![0.0; n];
    let mut l = vec![0.0; n];
    let mut r = vec![0.0; n];
    spec.initial_into(0.0, &mut b0);
    spec.initial_into(1.0, &mut b1);
    spec.left_into(0.0, &mut l);
    spec.right_into(0.0, &mut r);
    for i in 0..n {
        if !((l[i] - b0[i]).abs() <= CORNER_TOL) {
            return Err(ProblemError::CornerMismatch {
                component: i,
                which: "left",
                boundary: l[i],
                initial: b0[i],
            });
        }
        if !((r[i] - b1[i]).abs() <= CORNER_TOL) {
            return Err(ProblemError::CornerMismatch {
                component: i,
                which: "right",
                boundary: r[i],
                initial: b1[i],
            });
        }
    }
    Ok(())
}

fn check_matrix_at(a: &DenseMatrix, x: f64, t: f64) -> Result<(), ProblemError> {
    let n = a.size();
    for i in 0..n {
        let row = a.row(i);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite {
                what: format!("coefficient row {i}"),
                x,
                t,
            });
        }
        let off: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.abs()).sum();
        if !(row[i] > off) {
            return Err(ProblemError::DominanceViolation { row: i, x, t });
        }
        for (j, &v) in row.iter().enumerate() {
            if j != i && v > 0.0 {
                return Err(ProblemError::SignViolation {
                    row: i,
                    col: j,
                    value: v,
                    x,
                    t,
                });
            }
        }
    }
    Ok(())
}

/// Minimum row sum over the grid and rows, with its location.
fn min_row_sum(spec: &ProblemSpec, grid: &[(f64, f64)]) -> (f64, usize, f64, f64) {
    let n = spec.n();
    let mut best = (f64::INFINITY, 0, 0.0, 0.0);
    for &(x, t) in grid {
        let a = spec.coefficient_matrix(x, t);
        for i in 0..n {
            let s: f64 = a.row(i).iter().sum();
            // NaN row sums count as the worst case
            if !(s >= best.0) {
                best = (s, i, x, t);
            }
        }
    }
    best
}

/// Returns `0.9 * min_{grid, i} sum_j a_ij(x, t)`.
pub fn compute_alpha(spec: &ProblemSpec, sample_density: usize) -> Result<f64, ProblemError> {
    if sample_density < 2 {
        return Err(ProblemError::BadSampleDensity(sample_density));
    }
    spec.check_shape()?;
    let grid = sample_grid(spec.t_end, sample_density);
    alpha_from_grid(spec, &grid)
}

fn alpha_from_grid(spec: &ProblemSpec, grid: &[(f64, f64)]) -> Result<f64, ProblemError> {
    let (min_sum, row, x, t) = min_row_sum(spec, grid);
    if !(min_sum > 0.0) {
        return Err(ProblemError::NonPositiveRowSum {
            min_row_sum: min_sum,
            row,
            x,
            t,
        });
    }
    Ok(ALPHA_SAFETY * min_sum)
}

/// Checks the structural hypotheses on a uniform sample grid and fixes alpha.
pub fn validate_problem(spec: ProblemSpec, sample_density: usize) -> Result<ValidatedProblem, ProblemError> {
    validate_problem_with_alpha(spec, sample_density, None)
}

/// As [`validate_problem`], optionally with a user-chosen alpha which must lie
/// strictly between zero and the sampled minimum row sum.
pub fn validate_problem_with_alpha(
    spec: ProblemSpec,
    sample_density: usize,
    alpha_override: Option<f64>,
) -> Result<ValidatedProblem, ProblemError> {
    if sample_density < 2 {
        return Err(ProblemError::BadSampleDensity(sample_density));
    }
    spec.check_shape()?;
    check_eps(&spec.eps)?;
    check_corners(&spec)?;
    let grid = sample_grid(spec.t_end, sample_density);
    let n = spec.n();
    let mut buf = vec![0.0; n];
    for &(x, t) in &grid {
        check_matrix_at(&spec.coefficient_matrix(x, t), x, t)?;
        spec.source_into(x, t, &mut buf);
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite {
                what: "source".into(),
                x,
                t,
            });
        }
    }
    let alpha = match alpha_override {
        None => alpha_from_grid(&spec, &grid)?,
        Some(alpha) => {
            let min_sum = min_row_sum(&spec, &grid).0;
            if !(alpha > 0.0 && alpha < min_sum) {
                return Err(ProblemError::BadAlphaOverride {
                    alpha,
                    min_row_sum: min_sum,
                });
            }
            alpha
        }
    };
    let max_eps = spec.eps.iter().copied().fold(0.0, f64::max);
    if !(max_eps.sqrt() <= alpha.sqrt() / 6.0) {
        return Err(ProblemError::AlphaTooSmall {
            required: 36.0 * max_eps,
            actual: alpha,
        });
    }
    Ok(ValidatedProblem {
        spec,
        alpha,
        sample_grid: grid,
    })
}

/// Solves the reduced system `u0_t + A u0 = f` at a fixed `x` with backward
/// differences on `time`. Row `k` of the result is `u0(x, t_k)`.
pub fn reduced_solution(problem: &ValidatedProblem, x: f64, time: &TimeMesh) -> Result<Vec<Vec<f64>>, LinalgError> {
    let spec = &problem.spec;
    let n = spec.n();
    let mut traj = Vec::with_capacity(time.len());
    let mut u = vec![0.0; n];
    spec.initial_into(x, &mut u);
    traj.push(u.clone());
    let mut f = vec![0.0; n];
    for k in 1..time.len() {
        let t = time.nodes[k];
        let dt = t - time.nodes[k - 1];
        let mut m = spec.coefficient_matrix(x, t);
        for i in 0..n {
            m[(i, i)] += 1.0 / dt;
        }
        spec.source_into(x, t, &mut f);
        let mut rhs: Vec<f64> = f.iter().zip(&u).map(|(fi, ui)| fi + ui / dt).collect();
        m.lu(k)?.solve_in_place(&mut rhs);
        u = rhs;
        traj.push(u.clone());
    }
    Ok(traj)
}
