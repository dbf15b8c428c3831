//! The finite difference operator `L = D-_t - E delta^2_x + A` on a tensor
//! mesh, and assembly of the implicit system solved at each time level.

use crate::linalg::{BlockTridiagonalSystem, DenseMatrix};
use crate::mesh::{SpaceMesh, TimeMesh};
use crate::problem::ValidatedProblem;

/// `n`-vector values on the full `(N+1) x (M+1)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshFunction {
    n: usize,
    nx: usize,
    nt: usize,
    data: Vec<f64>,
}

impl MeshFunction {
    pub fn zeros(n: usize, nx: usize, nt: usize) -> Self {
        Self {
            n,
            nx,
            nt,
            data: vec![0.0; n * nx * nt],
        }
    }

    pub fn for_meshes(n: usize, space: &SpaceMesh, time: &TimeMesh) -> Self {
        Self::zeros(n, space.nodes.len(), time.len())
    }

    /// Fills every node from `value(j, k, out)`.
    pub fn from_fn(n: usize, nx: usize, nt: usize, mut value: impl FnMut(usize, usize, &mut [f64])) -> Self {
        let mut mf = Self::zeros(n, nx, nt);
        for k in 0..nt {
            for j in 0..nx {
                value(j, k, mf.at_mut(j, k));
            }
        }
        mf
    }

    pub fn components(&self) -> usize {
        self.n
    }

    pub fn space_len(&self) -> usize {
        self.nx
    }

    pub fn time_len(&self) -> usize {
        self.nt
    }

    #[inline]
    fn offset(&self, j: usize, k: usize) -> usize {
        (k * self.nx + j) * self.n
    }

    #[inline]
    pub fn at(&self, j: usize, k: usize) -> &[f64] {
        let o = self.offset(j, k);
        &self.data[o..o + self.n]
    }

    #[inline]
    pub fn at_mut(&mut self, j: usize, k: usize) -> &mut [f64] {
        let o = self.offset(j, k);
        &mut self.data[o..o + self.n]
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize, i: usize) -> f64 {
        self.data[self.offset(j, k) + i]
    }

    /// All nodes at time level `k`, concatenated over `j`.
    pub fn level(&self, k: usize) -> &[f64] {
        let o = self.offset(0, k);
        &self.data[o..o + self.nx * self.n]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let o = self.offset(0, k);
        let len = self.nx * self.n;
        &mut self.data[o..o + len]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute value over the boundary `j = 0`, `j = N` and `k = 0`.
    pub fn boundary_max_abs(&self) -> f64 {
        let mut m = 0.0_f64;
        for k in 0..self.nt {
            for j in 0..self.nx {
                if k == 0 || j == 0 || j + 1 == self.nx {
                    m = self.at(j, k).iter().fold(m, |a, v| a.max(v.abs()));
                }
            }
        }
        m
    }

    /// Maximum absolute value over interior nodes `1 <= j < N`, `k >= 1`.
    pub fn interior_max_abs(&self) -> f64 {
        let mut m = 0.0_f64;
        for k in 1..self.nt {
            for j in 1..self.nx.saturating_sub(1) {
                m = self.at(j, k).iter().fold(m, |a, v| a.max(v.abs()));
            }
        }
        m
    }
}

/// Left and right coefficients of the nonuniform second difference at `x_j`:
/// `delta^2 W = c_minus (W_{j-1} - W_j) + c_plus (W_{j+1} - W_j)`.
#[inline]
pub fn stencil_coefficients(h_left: f64, h_right: f64) -> (f64, f64) {
    let sum = h_left + h_right;
    (2.0 / (h_left * sum), 2.0 / (h_right * sum))
}

/// `(D+ W - D- W) / ((h_j + h_{j+1}) / 2)`, componentwise.
pub fn spatial_second_difference(w_left: &[f64], w_mid: &[f64], w_right: &[f64], h_left: f64, h_right: f64) -> Vec<f64> {
    let half_sum = (h_left + h_right) / 2.0;
    w_left
        .iter()
        .zip(w_mid)
        .zip(w_right)
        .map(|((l, m), r)| ((r - m) / h_right - (m - l) / h_left) / half_sum)
        .collect()
}

/// `L Psi` at interior nodes `1 <= j < N`, `1 <= k <= M`. Boundary entries
/// of the result are zero.
pub fn apply_operator(problem: &ValidatedProblem, space: &SpaceMesh, time: &TimeMesh, psi: &MeshFunction) -> MeshFunction {
    let n = problem.n();
    let eps = problem.eps();
    let nx = space.nodes.len();
    let mut out = MeshFunction::zeros(n, nx, time.len());
    for k in 1..time.len() {
        let t = time.nodes[k];
        let dt = t - time.nodes[k - 1];
        for j in 1..nx - 1 {
            let x = space.nodes[j];
            let a = problem.spec.coefficient_matrix(x, t);
            let d2 = spatial_second_difference(psi.at(j - 1, k), psi.at(j, k), psi.at(j + 1, k), space.h(j), space.h(j + 1));
            let cur = psi.at(j, k);
            let prev = psi.at(j, k - 1);
            let av = a.mul_vec(cur);
            for (i, o) in out.at_mut(j, k).iter_mut().enumerate() {
                *o = (cur[i] - prev[i]) / dt - eps[i] * d2[i] + av[i];
            }
        }
    }
    out
}

/// Assembles the implicit system at level `k` from problem data.
///
/// `u_prev` holds the full level `k-1` (all `N+1` nodes, `n` values each);
/// boundary values `phi_L(t_k)`, `phi_R(t_k)` are folded into the right-hand side.
pub fn assemble_step(problem: &ValidatedProblem, space: &SpaceMesh, time: &TimeMesh, k: usize, u_prev: &[f64]) -> BlockTridiagonalSystem {
    assert!(k >= 1 && k < time.len(), "time index {k} outside 1..={}", time.intervals);
    let n = problem.n();
    let t = time.nodes[k];
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    problem.spec.left_into(t, &mut left);
    problem.spec.right_into(t, &mut right);
    assemble_with(problem, space, time, k, u_prev, &left, &right, |_, x, t, out| {
        problem.spec.source_into(x, t, out)
    })
}

/// Assembly with explicit boundary values and a source given per interior
/// node as `source(j, x_j, t_k, out)`. Used to solve with arbitrary data on
/// the operator of `problem`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_with(
    problem: &ValidatedProblem,
    space: &SpaceMesh,
    time: &TimeMesh,
    k: usize,
    u_prev: &[f64],
    left: &[f64],
    right: &[f64],
    mut source: impl FnMut(usize, f64, f64, &mut [f64]),
) -> BlockTridiagonalSystem {
    let n = problem.n();
    let eps = problem.eps();
    let nx = space.nodes.len();
    let interior = nx - 2;
    let t = time.nodes[k];
    let inv_dt = 1.0 / (t - time.nodes[k - 1]);

    let mut diag = Vec::with_capacity(interior);
    let mut lower = Vec::with_capacity(interior.saturating_sub(1));
    let mut upper = Vec::with_capacity(interior.saturating_sub(1));
    let mut rhs = Vec::with_capacity(interior);
    for j in 1..nx - 1 {
        let x = space.nodes[j];
        let (c_minus, c_plus) = stencil_coefficients(space.h(j), space.h(j + 1));
        let mut block = problem.spec.coefficient_matrix(x, t);
        for i in 0..n {
            block[(i, i)] += inv_dt + eps[i] * (c_minus + c_plus);
        }
        diag.push(block);

        let mut r = vec![0.0; n];
        source(j, x, t, &mut r);
        for i in 0..n {
            r[i] += u_prev[j * n + i] * inv_dt;
        }
        let west: Vec<f64> = eps.iter().map(|e| -e * c_minus).collect();
        let east: Vec<f64> = eps.iter().map(|e| -e * c_plus).collect();
        if j == 1 {
            r.iter_mut().zip(&west).zip(left).for_each(|((r, w), b)| *r -= w * b);
        } else {
            lower.push(DenseMatrix::from_diagonal(&west));
        }
        if j == nx - 2 {
            r.iter_mut().zip(&east).zip(right).for_each(|((r, e), b)| *r -= e * b);
        } else {
            upper.push(DenseMatrix::from_diagonal(&east));
        }
        rhs.push(r);
    }
    BlockTridiagonalSystem {
        block_size: n,
        lower,
        diag,
        upper,
        rhs,
    }
}
