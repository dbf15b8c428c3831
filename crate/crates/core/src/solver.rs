//! Time marching, error norms and off-grid evaluation.

use thiserror::Error;

use crate::discrete::{apply_operator, assemble_with, MeshFunction};
use crate::linalg::{block_thomas_solve, LinalgError};
use crate::mesh::{SpaceMesh, TimeMesh};
use crate::problem::{Field, ValidatedProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("linear solve failed at time level {level}: {source}")]
    Linear { level: usize, source: LinalgError },
    #[error("point (x, t) = ({x}, {t}) lies outside [0, 1] x [0, {t_end}]")]
    OutOfDomain { x: f64, t: f64, t_end: f64 },
    #[error("mesh function shape does not match the meshes: {0}")]
    Shape(String),
}

/// Discrete solution on the full tensor grid.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub problem: ValidatedProblem,
    pub space: SpaceMesh,
    pub time: TimeMesh,
    pub values: MeshFunction,
}

/// Marches the scheme from `t_0` to `t_M`, one block-tridiagonal solve per level.
pub fn march(problem: &ValidatedProblem, space: &SpaceMesh, time: &TimeMesh) -> Result<DiscreteSolution, SolveError> {
    let n = problem.n();
    let nx = space.nodes.len();
    let spec = &problem.spec;
    let mut boundary = MeshFunction::for_meshes(n, space, time);
    for j in 0..nx {
        spec.initial_into(space.nodes[j], boundary.at_mut(j, 0));
    }
    for k in 1..time.len() {
        spec.left_into(time.nodes[k], boundary.at_mut(0, k));
        spec.right_into(time.nodes[k], boundary.at_mut(nx - 1, k));
    }
    let values = march_with_data(problem, space, time, &boundary, |_, _, x, t, out| spec.source_into(x, t, out))?;
    Ok(DiscreteSolution {
        problem: problem.clone(),
        space: space.clone(),
        time: time.clone(),
        values,
    })
}

/// Solves `L U = g` at interior nodes with `U` equal to `boundary` on the
/// boundary nodes (`k = 0`, `j = 0`, `j = N`). `source(j, k, x_j, t_k, out)`
/// supplies `g`. Interior entries of `boundary` are ignored.
pub fn march_with_data(
    problem: &ValidatedProblem,
    space: &SpaceMesh,
    time: &TimeMesh,
    boundary: &MeshFunction,
    mut source: impl FnMut(usize, usize, f64, f64, &mut [f64]),
) -> Result<MeshFunction, SolveError> {
    let n = problem.n();
    let nx = space.nodes.len();
    if boundary.components() != n || boundary.space_len() != nx || boundary.time_len() != time.len() {
        return Err(SolveError::Shape(format!(
            "expected {n} x {nx} x {}, got {} x {} x {}",
            time.len(),
            boundary.components(),
            boundary.space_len(),
            boundary.time_len()
        )));
    }
    let mut u = MeshFunction::for_meshes(n, space, time);
    u.level_mut(0).copy_from_slice(boundary.level(0));
    for k in 1..time.len() {
        let left = boundary.at(0, k).to_vec();
        let right = boundary.at(nx - 1, k).to_vec();
        let sys = assemble_with(problem, space, time, k, u.level(k - 1), &left, &right, |j, x, t, out| {
            source(j, k, x, t, out)
        });
        let interior = block_thomas_solve(&sys).map_err(|source| SolveError::Linear { level: k, source })?;
        u.at_mut(0, k).copy_from_slice(&left);
        u.at_mut(nx - 1, k).copy_from_slice(&right);
        for (j, v) in interior.into_iter().enumerate() {
            u.at_mut(j + 1, k).copy_from_slice(&v);
        }
    }
    Ok(u)
}

impl DiscreteSolution {
    pub fn n(&self) -> usize {
        self.problem.n()
    }

    /// Value at node `(x_j, t_k)`.
    pub fn at(&self, j: usize, k: usize) -> &[f64] {
        self.values.at(j, k)
    }

    /// Bilinear interpolation on the tensor grid; exact at nodes.
    pub fn evaluate(&self, x: f64, t: f64) -> Result<Vec<f64>, SolveError> {
        let t_end = self.time.t_end;
        if !(0.0..=1.0).contains(&x) || !(0.0..=t_end).contains(&t) {
            return Err(SolveError::OutOfDomain { x, t, t_end });
        }
        let (j, wx) = locate(&self.space.nodes, x);
        let (k, wt) = locate(&self.time.nodes, t);
        let n = self.n();
        let mut out = vec![0.0; n];
        for (dk, ft) in [(0, 1.0 - wt), (1, wt)] {
            if ft == 0.0 {
                continue;
            }
            for (dj, fx) in [(0, 1.0 - wx), (1, wx)] {
                if fx == 0.0 {
                    continue;
                }
                let v = self.values.at(j + dj, k + dk);
                for i in 0..n {
                    out[i] += ft * fx * v[i];
                }
            }
        }
        Ok(out)
    }

    /// Maximum over components and grid nodes of `|U - exact|`.
    pub fn max_norm_error(&self, exact: &[Field]) -> f64 {
        let mut err = 0.0_f64;
        for (k, &t) in self.time.nodes.iter().enumerate() {
            for (j, &x) in self.space.nodes.iter().enumerate() {
                for (u, e) in self.values.at(j, k).iter().zip(exact) {
                    err = err.max((u - e.eval(x, t)).abs());
                }
            }
        }
        err
    }

    /// `max |f - L U|` over interior nodes.
    pub fn interior_residual(&self) -> f64 {
        let lu = apply_operator(&self.problem, &self.space, &self.time, &self.values);
        let n = self.n();
        let mut f = vec![0.0; n];
        let mut res = 0.0_f64;
        for k in 1..self.time.len() {
            for j in 1..self.space.nodes.len() - 1 {
                self.problem.spec.source_into(self.space.nodes[j], self.time.nodes[k], &mut f);
                for (fi, li) in f.iter().zip(lu.at(j, k)) {
                    res = res.max((fi - li).abs());
                }
            }
        }
        res
    }

    /// Scale `1/dt + 2 eps_n / min h^2 + max |a_ij|` of the operator, used to
    /// normalize residuals.
    pub fn operator_scale(&self) -> f64 {
        let eps_max = self.problem.eps().iter().copied().fold(0.0, f64::max);
        let h = self.space.min_width();
        let a_max = self
            .time
            .nodes
            .iter()
            .flat_map(|&t| self.space.nodes.iter().map(move |&x| (x, t)))
            .map(|(x, t)| self.problem.spec.coefficient_matrix(x, t).max_abs())
            .fold(0.0, f64::max);
        1.0 / self.time.step() + 2.0 * eps_max / (h * h) + a_max
    }
}

/// Cell index and fractional offset of `v` in the sorted `nodes`, snapping to
/// a node when within rounding distance.
fn locate(nodes: &[f64], v: f64) -> (usize, f64) {
    let last = nodes.len() - 1;
    let hi = nodes.partition_point(|&x| x <= v).clamp(1, last);
    let lo = hi - 1;
    let (a, b) = (nodes[lo], nodes[hi]);
    let w = (v - a) / (b - a);
    let snap = 1e-12;
    if w <= snap {
        (lo, 0.0)
    } else if w >= 1.0 - snap {
        (lo, 1.0)
    } else {
        (lo, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::mesh::{build_time_mesh, shishkin_mesh};
    use crate::problem::{validate_problem, ProblemSpec};

    fn pair(eps: [f64; 2]) -> ValidatedProblem {
        let a = DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]);
        validate_problem(ProblemSpec::with_constant_matrix(eps.to_vec(), &a, 1.0), 16).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let p = pair([1e-6, 1e-4]);
        let space = shishkin_mesh(p.eps(), p.alpha, 32).unwrap();
        let time = build_time_mesh(1.0, 8).unwrap();
        let sol = march(&p, &space, &time).unwrap();
        assert_eq!(sol.values.max_abs(), 0.0);
    }

    #[test]
    fn unit_source_bounded_by_stability_estimate() {
        // A = [1], eps = 1e-3, f = 1, zero data: 0 <= U <= ||f|| / alpha
        let mut spec = ProblemSpec::with_constant_matrix(vec![1e-3], &DenseMatrix::from_rows(&[vec![1.0]]), 1.0);
        spec.source = vec![Field::constant(1.0)];
        let p = validate_problem(spec, 16).unwrap();
        let space = shishkin_mesh(p.eps(), p.alpha, 16).unwrap();
        let time = build_time_mesh(1.0, 4).unwrap();
        let sol = march(&p, &space, &time).unwrap();
        for v in sol.values.values() {
            assert!(*v >= 0.0 && *v <= 1.0 / p.alpha, "{v}");
        }
        // the scheme is exact on constants, so U stays below the reduced solution 1 - (1 + dt)^-k
        assert!(sol.values.max_abs() <= 1.0);
    }

    #[test]
    fn boundary_rows_match_data() {
        let mut spec = ProblemSpec::with_constant_matrix(vec![1e-4], &DenseMatrix::from_rows(&[vec![1.0]]), 2.0);
        spec.left = vec![Field::new(|_, t| t * t)];
        spec.right = vec![Field::new(|_, t| -t)];
        spec.initial = vec![Field::new(|x, _| 0.0 * x)];
        let p = validate_problem(spec, 8).unwrap();
        let space = shishkin_mesh(p.eps(), p.alpha, 16).unwrap();
        let time = build_time_mesh(2.0, 5).unwrap();
        let sol = march(&p, &space, &time).unwrap();
        for (k, &t) in time.nodes.iter().enumerate().skip(1) {
            assert_eq!(sol.at(0, k)[0], t * t);
            assert_eq!(sol.at(16, k)[0], -t);
        }
    }

    #[test]
    fn residual_after_march() {
        let mut p = pair([1e-6, 1e-4]);
        p.spec.source = vec![Field::new(|x, t| 1.0 + x * t), Field::new(|x, _| (3.0 * x).sin())];
        let space = shishkin_mesh(p.eps(), p.alpha, 64).unwrap();
        let time = build_time_mesh(1.0, 16).unwrap();
        let sol = march(&p, &space, &time).unwrap();
        assert!(sol.interior_residual() <= 1e-9 * sol.operator_scale());
    }

    #[test]
    fn evaluate_nodes_cells_and_domain() {
        let mut p = pair([1e-6, 1e-4]);
        p.spec.source = vec![Field::constant(1.0), Field::constant(0.5)];
        let space = shishkin_mesh(p.eps(), p.alpha, 32).unwrap();
        let time = build_time_mesh(1.0, 4).unwrap();
        let sol = march(&p, &space, &time).unwrap();
        for k in [0, 2, 4] {
            for j in [0, 3, 16, 31, 32] {
                assert_eq!(sol.evaluate(space.nodes[j], time.nodes[k]).unwrap(), sol.at(j, k).to_vec());
            }
        }
        assert!(matches!(sol.evaluate(1.5, 0.5), Err(SolveError::OutOfDomain { .. })));
        assert!(matches!(sol.evaluate(0.5, -0.1), Err(SolveError::OutOfDomain { .. })));

        // cell with corner values 0 (left) and 1 (right) at both time levels
        let mut values = MeshFunction::for_meshes(1, &space, &time);
        for k in 0..time.len() {
            values.at_mut(17, k)[0] = 1.0;
        }
        let p1 = validate_problem(ProblemSpec::with_constant_matrix(vec![1e-4], &DenseMatrix::identity(1), 1.0), 4).unwrap();
        let synthetic = DiscreteSolution {
            problem: p1,
            space: space.clone(),
            time: time.clone(),
            values,
        };
        let xm = 0.5 * (space.nodes[16] + space.nodes[17]);
        let tm = 0.5 * (time.nodes[1] + time.nodes[2]);
        assert!((synthetic.evaluate(xm, tm).unwrap()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn max_norm_error_definition() {
        let p = pair([1e-6, 1e-4]);
        let space = shishkin_mesh(p.eps(), p.alpha, 16).unwrap();
        let time = build_time_mesh(1.0, 2).unwrap();
        let sol = march(&p, &space, &time).unwrap();
        assert_eq!(sol.max_norm_error(&[Field::constant(0.0), Field::constant(0.0)]), 0.0);
        assert_eq!(sol.max_norm_error(&[Field::constant(1.0), Field::constant(1.0)]), 1.0);
        let mut synthetic = sol.clone();
        synthetic.values.at_mut(3, 1)[0] = 0.1;
        synthetic.values.at_mut(5, 2)[1] = -0.3;
        assert!((synthetic.max_norm_error(&[Field::constant(0.0), Field::constant(0.0)]) - 0.3).abs() < 1e-15);
    }
}
