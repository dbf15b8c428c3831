//! Finite difference solver for singularly perturbed linear parabolic
//! reaction-diffusion systems
//!
//! ```text
//!   u_t - E u_xx + A(x,t) u = f,   E = diag(eps_1, ..., eps_n),  eps_1 < ... < eps_n
//! ```
//!
//! on `(0,1) x (0,T]`, discretized with backward differences in time and the
//! classical three-point second difference on a piecewise-uniform Shishkin
//! mesh whose `n` transition points resolve the overlapping boundary layers.
//!
//! The crate is organised bottom-up:
//!
//! - [`problem`]: problem data and validation of the coefficient hypotheses
//! - [`mesh`]: Shishkin and time meshes, layer functions, interleaving points
//! - [`discrete`]: the difference operator and per-level system assembly
//! - [`linalg`]: block Thomas solver, dense oracle, M-matrix checks
//! - [`solver`]: time marching, norms and interpolation
//! - [`verify`]: manufactured problems and convergence studies
//! - [`suites`]: randomized property suites

// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discrete;
pub mod linalg;
pub mod mesh;
pub mod problem;
pub mod solver;
pub mod suites;
pub mod verify;

pub use discrete::{apply_operator, assemble_step, spatial_second_difference, MeshFunction};
pub use linalg::{block_thomas_solve, dense_solve_oracle, m_matrix_check, BlockTridiagonalSystem, DenseMatrix, LinalgError};
pub use mesh::{
    build_space_mesh, build_time_mesh, interleaving_point, layer_function, mesh_geometry_report, shishkin_mesh, transition_points,
    LayerPoint, LayerSide, MeshError, SpaceMesh, TimeMesh,
};
pub use problem::{compute_alpha, reduced_solution, validate_problem, Field, ProblemError, ProblemSpec, ValidatedProblem};
pub use solver::{march, DiscreteSolution, SolveError};
pub use verify::{catalog, convergence_study, layer_problem, reference_error, ConvergenceReport, ManufacturedProblem, VerifyError};
