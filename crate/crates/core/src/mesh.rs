//! Piecewise-uniform Shishkin meshes in space, uniform meshes in time, and
//! the exponential layer functions used to analyse them.
//!
//! Parameter indices are zero-based throughout: `eps[0]` is the smallest
//! diffusion parameter and `sigma[0]` the innermost transition point.

use serde::Serialize;
use thiserror::Error;

use crate::problem::{validate_eps, ProblemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("N = {n_intervals} is not of the form 2^(n+p+1) with p >= 1 for n = {n}")]
    BadN { n_intervals: usize, n: usize },
    #[error("time mesh needs T > 0 and M >= 1 (got T = {t_end}, M = {m})")]
    BadTimeMesh { t_end: f64, m: usize },
    #[error("alpha must be positive, got {0}")]
    BadAlpha(f64),
    #[error("invalid transition points: {0}")]
    BadSigma(String),
    #[error("interleaving point needs i < j < n and 0 < s <= 3/2 (got i = {i}, j = {j}, s = {s})")]
    BadInterleaving { i: usize, j: usize, s: f64 },
    #[error(transparent)]
    Parameters(#[from] ProblemError),
}

/// Returns `p` such that `N = 2^(n+p+1)`, requiring `p >= 1`.
pub fn admissible_p(n: usize, n_intervals: usize) -> Result<u32, MeshError> {
    let bad = MeshError::BadN { n_intervals, n };
    if n == 0 || !n_intervals.is_power_of_two() {
        return Err(bad);
    }
    let k = n_intervals.trailing_zeros() as usize;
    if k < n + 2 {
        return Err(bad);
    }
    Ok((k - n - 1) as u32)
}

/// Transition points: `sigma_n = min(1/4, 2 sqrt(eps_n/alpha) ln N)` and
/// `sigma_r = min(sigma_{r+1}/2, 2 sqrt(eps_r/alpha) ln N)` going down.
/// Returned in ascending order.
pub fn transition_points(eps: &[f64], alpha: f64, n_intervals: usize) -> Result<Vec<f64>, MeshError> {
    validate_eps(eps)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(MeshError::BadAlpha(alpha));
    }
    admissible_p(eps.len(), n_intervals)?;
    let ln_n = (n_intervals as f64).ln();
    let mut sigma = vec![0.0; eps.len()];
    let mut cap = 0.25;
    for r in (0..eps.len()).rev() {
        let layer = 2.0 * (eps[r] / alpha).sqrt() * ln_n;
        sigma[r] = if layer < cap { layer } else { cap };
        cap = sigma[r] / 2.0;
    }
    Ok(sigma)
}

/// Uniform mesh on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeMesh {
    pub intervals: usize,
    pub t_end: f64,
    pub nodes: Vec<f64>,
}

impl TimeMesh {
    /// Number of nodes, `M + 1`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.t_end / self.intervals as f64
    }
}

pub fn build_time_mesh(t_end: f64, intervals: usize) -> Result<TimeMesh, MeshError> {
    if intervals == 0 || !(t_end > 0.0 && t_end.is_finite()) {
        return Err(MeshError::BadTimeMesh { t_end, m: intervals });
    }
    let mut nodes: Vec<f64> = (0..=intervals).map(|k| k as f64 * t_end / intervals as f64).collect();
    nodes[intervals] = t_end;
    Ok(TimeMesh { intervals, t_end, nodes })
}

/// Piecewise-uniform mesh on `[0, 1]` with `2n + 1` uniform pieces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceMesh {
    pub intervals: usize,
    pub p: u32,
    pub sigma: Vec<f64>,
    /// `x_0 = 0 < x_1 < ... < x_N = 1`.
    pub nodes: Vec<f64>,
    /// `widths[j - 1] = h_j = x_j - x_{j-1}`.
    pub widths: Vec<f64>,
    /// Node indices `j` where `h_{j+1} != h_j`.
    pub change_points: Vec<usize>,
    /// Interval counts of the pieces, left to right.
    pub piece_counts: Vec<usize>,
}

impl SpaceMesh {
    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    /// `h_j` for `1 <= j <= N`.
    #[inline]
    pub fn h(&self, j: usize) -> f64 {
        self.widths[j - 1]
    }

    pub fn min_width(&self) -> f64 {
        self.widths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Node index of `sigma_r` (zero-based `r`).
    pub fn sigma_index(&self, r: usize) -> usize {
        self.piece_counts[..=r].iter().sum()
    }

    pub fn is_uniform(&self) -> bool {
        self.change_points.is_empty()
    }
}

/// Builds the mesh for transition points `sigma` (ascending, `<= 1/4`).
pub fn build_space_mesh(sigma: &[f64], n_intervals: usize) -> Result<SpaceMesh, MeshError> {
    let n = sigma.len();
    let p = admissible_p(n, n_intervals)?;
    if sigma.first().is_none_or(|&s| !(s > 0.0)) || sigma.windows(2).any(|w| !(w[0] < w[1])) || sigma[n - 1] > 0.25 {
        return Err(MeshError::BadSigma(format!(
            "need 0 < sigma_1 < ... < sigma_n <= 1/4, got {sigma:?}"
        )));
    }
    let big_n = n_intervals;
    // left half: [0, s1], (s1, s2], ..., (s_n, 1/2]
    let mut bounds = Vec::with_capacity(n + 2);
    bounds.push(0.0);
    bounds.extend_from_slice(sigma);
    bounds.push(0.5);
    let mut counts = Vec::with_capacity(n + 1);
    counts.push(big_n >> (n + 1));
    for k in 2..=n {
        counts.push(big_n >> (n - k + 3));
    }
    counts.push(big_n / 4);
    debug_assert_eq!(counts.iter().sum::<usize>(), big_n / 2);

    let piece_widths: Vec<f64> = (0..=n).map(|k| (bounds[k + 1] - bounds[k]) / counts[k] as f64).collect();
    let half = big_n / 2;
    let mut nodes = vec![0.0; big_n + 1];
    let mut j = 0;
    for k in 0..=n {
        for i in 0..counts[k] {
            nodes[j + i] = bounds[k] + i as f64 * piece_widths[k];
        }
        j += counts[k];
        nodes[j] = bounds[k + 1];
    }
    debug_assert_eq!(j, half);
    for j in 0..half {
        nodes[big_n - j] = 1.0 - nodes[j];
    }
    let widths: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();

    let mut change_left = Vec::new();
    let mut idx = 0;
    for k in 0..n {
        idx += counts[k];
        let (a, b) = (piece_widths[k], piece_widths[k + 1]);
        if (a - b).abs() > 1e-12 * a.max(b) {
            change_left.push(idx);
        }
    }
    let mut change_points = change_left.clone();
    change_points.extend(change_left.iter().rev().map(|&j| big_n - j));

    let mut piece_counts = counts.clone();
    piece_counts.pop();
    piece_counts.push(big_n / 2);
    piece_counts.extend(counts[..n].iter().rev());

    Ok(SpaceMesh {
        intervals: big_n,
        p,
        sigma: sigma.to_vec(),
        nodes,
        widths,
        change_points,
        piece_counts,
    })
}

/// Convenience: transition points followed by the mesh.
pub fn shishkin_mesh(eps: &[f64], alpha: f64, n_intervals: usize) -> Result<SpaceMesh, MeshError> {
    let sigma = transition_points(eps, alpha, n_intervals)?;
    build_space_mesh(&sigma, n_intervals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSide {
    Left,
    Right,
    Both,
}

#[inline]
fn exp_or_zero(exponent: f64) -> f64 {
    if exponent < -745.0 {
        0.0
    } else {
        exponent.exp()
    }
}

/// `B^L_i(x) = exp(-x sqrt(alpha/eps_i))`, its mirror `B^R_i(x) = B^L_i(1-x)`,
/// or their sum.
pub fn layer_function(side: LayerSide, i: usize, x: f64, eps: &[f64], alpha: f64) -> f64 {
    let rate = (alpha / eps[i]).sqrt();
    let left = || exp_or_zero(-x * rate);
    let right = || exp_or_zero(-(1.0 - x) * rate);
    match side {
        LayerSide::Left => left(),
        LayerSide::Right => right(),
        LayerSide::Both => left() + right(),
    }
}

/// Crossing point of `B^L_i / eps_i^s` and `B^L_j / eps_j^s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerPoint {
    pub i: usize,
    pub j: usize,
    pub s: f64,
    pub x: f64,
}

/// Closed form of the crossing point for `i < j`, `0 < s <= 3/2`.
///
/// With `r = sqrt(eps_i / eps_j)` this is
/// `x = -2 s sqrt(eps_i) ln(r) / (sqrt(alpha) (1 - r))`, evaluated with
/// `ln_1p` so nearly coincident parameters do not cancel.
pub fn interleaving_point(i: usize, j: usize, s: f64, eps: &[f64], alpha: f64) -> Result<LayerPoint, MeshError> {
    if !(i < j && j < eps.len() && s > 0.0 && s <= 1.5) {
        return Err(MeshError::BadInterleaving { i, j, s });
    }
    validate_eps(eps)?;
    if !(alpha > 0.0) {
        return Err(MeshError::BadAlpha(alpha));
    }
    let (ei, ej) = (eps[i], eps[j]);
    let (si, sj) = (ei.sqrt(), ej.sqrt());
    let gap = (ej - ei) / (sj * (sj + si)); // 1 - r
    let neg_ln_r = -(-gap).ln_1p();
    let x = 2.0 * s * si * neg_ln_r / (alpha.sqrt() * gap);
    Ok(LayerPoint { i, j, s, x })
}

/// `|lhs / rhs - 1|` for the crossing equation `B^L_i(x)/eps_i^s = B^L_j(x)/eps_j^s`,
/// evaluated in log space so that underflowing layer values still compare.
pub fn balance_residual(point: &LayerPoint, eps: &[f64], alpha: f64) -> f64 {
    let log_side = |k: usize| -point.x * (alpha / eps[k]).sqrt() - point.s * eps[k].ln();
    (log_side(point.i) - log_side(point.j)).exp_m1().abs()
}

/// Geometry of the mesh around one transition point `sigma_r`.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionGeometry {
    pub r: usize,
    pub sigma: f64,
    /// `sigma_{r+1}/2 - sigma_r`, with `sigma_{n+1} = 1/2`.
    pub d: f64,
    /// `sigma_r / (sqrt(eps_r) ln N)`.
    pub sigma_witness: f64,
    pub h_before: f64,
    pub h_after: f64,
    /// `D+ h_r = h_after - h_before`.
    pub width_jump: f64,
    /// `(h_r + h_{r+1}) / (N^-1 ln N sqrt(eps_q))`, `q = r+1` if the width grows
    /// across `sigma_r`, `q = r` if it shrinks. `None` when there is no jump
    /// or `q` would be out of range.
    pub width_sum_witness: Option<f64>,
    /// `B^L_r(sigma_r)`, reported when `d > 0`.
    pub layer_value: Option<f64>,
    /// `|B^L_r(sigma_r) N^2 - 1| <= 1e-10`, when `d > 0`.
    pub layer_value_ok: Option<bool>,
    /// `(s, x^(s)_{r-1,r}, x <= sigma_r - h_r)` for `s` in {1/2, 1, 3/2}, when `d > 0` and `r > 0`.
    pub interleaving_checks: Vec<(f64, f64, bool)>,
    /// `B^L_q(sigma_r)/eps_q^s <= 1/eps_r^s` for all `q` and `s` in {1/2, 1, 3/2}, when `d > 0`.
    pub scaled_layer_ok: Option<bool>,
    /// `max_{q >= r} B^L_q(sigma_r - h_r) / B^L_q(sigma_r)`, when `d > 0`.
    pub growth_witness: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshGeometryReport {
    pub intervals: usize,
    pub uniform: bool,
    pub transitions: Vec<TransitionGeometry>,
}

impl MeshGeometryReport {
    /// True when every exactly-stated check holds.
    pub fn passed(&self) -> bool {
        self.transitions
            .iter()
            .all(|g| g.layer_value_ok.unwrap_or(true) && g.scaled_layer_ok.unwrap_or(true) && g.interleaving_checks.iter().all(|c| c.2))
    }
}

const REPORT_EXPONENTS: [f64; 3] = [0.5, 1.0, 1.5];

/// Geometric diagnostics for each transition point of `mesh`.
pub fn mesh_geometry_report(mesh: &SpaceMesh, eps: &[f64], alpha: f64) -> MeshGeometryReport {
    let n = mesh.n();
    let big_n = mesh.intervals as f64;
    let ln_n = big_n.ln();
    let transitions = (0..n)
        .map(|r| {
            let sigma = mesh.sigma[r];
            let next = if r + 1 < n { mesh.sigma[r + 1] } else { 0.5 };
            let d = next / 2.0 - sigma;
            let j = mesh.sigma_index(r);
            let h_before = mesh.h(j);
            let h_after = mesh.h(j + 1);
            let width_jump = h_after - h_before;
            let q = if width_jump > 0.0 {
                Some(r + 1)
            } else if width_jump < 0.0 {
                Some(r)
            } else {
                None
            };
            let width_sum_witness = q.filter(|&q| q < n).map(|q| (h_before + h_after) / (ln_n / big_n * eps[q].sqrt()));
            let mut g = TransitionGeometry {
                r,
                sigma,
                d,
                sigma_witness: sigma / (eps[r].sqrt() * ln_n),
                h_before,
                h_after,
                width_jump,
                width_sum_witness,
                layer_value: None,
                layer_value_ok: None,
                interleaving_checks: Vec::new(),
                scaled_layer_ok: None,
                growth_witness: None,
            };
            if d > 0.0 {
                let b = layer_function(LayerSide::Left, r, sigma, eps, alpha);
                g.layer_value = Some(b);
                g.layer_value_ok = Some((b * big_n * big_n - 1.0).abs() <= 1e-10);
                if r > 0 {
                    g.interleaving_checks = REPORT_EXPONENTS
                        .iter()
                        .map(|&s| {
                            let x = interleaving_point(r - 1, r, s, eps, alpha).map(|p| p.x).unwrap_or(f64::NAN);
                            (s, x, x <= sigma - h_before)
                        })
                        .collect();
                }
                // compare in log space: -sigma sqrt(alpha/eps_q) - s ln eps_q <= -s ln eps_r
                let scaled_ok = REPORT_EXPONENTS
                    .iter()
                    .all(|&s| (0..n).all(|q| -sigma * (alpha / eps[q]).sqrt() - s * eps[q].ln() <= -s * eps[r].ln() + 1e-12));
                g.scaled_layer_ok = Some(scaled_ok);
                g.growth_witness = Some((r..n).map(|q| (h_before * (alpha / eps[q]).sqrt()).exp()).fold(0.0, f64::max));
            }
            g
        })
        .collect();
    MeshGeometryReport {
        intervals: mesh.intervals,
        uniform: mesh.is_uniform(),
        transitions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn admissible_sizes() {
        assert_eq!(admissible_p(2, 16).unwrap(), 1);
        assert_eq!(admissible_p(2, 64).unwrap(), 3);
        assert_eq!(admissible_p(1, 8).unwrap(), 1);
        assert!(admissible_p(2, 48).is_err());
        assert!(admissible_p(2, 8).is_err());
        assert!(admissible_p(3, 16).is_err());
        assert!(admissible_p(0, 16).is_err());
    }

    #[test]
    fn transition_points_layer_regime() {
        let sigma = transition_points(&[1e-6, 1e-4], 0.9, 64).unwrap();
        // 2 sqrt(eps/0.9) ln 64
        assert!(rel(sigma[1], 0.0876771) < 1e-5, "{sigma:?}");
        assert!(rel(sigma[0], 0.00876771) < 1e-5, "{sigma:?}");
    }

    #[test]
    fn transition_points_capped() {
        let sigma = transition_points(&[0.016, 0.0225], 0.9, 16).unwrap();
        assert_eq!(sigma, vec![0.125, 0.25]);
    }

    #[test]
    fn transition_points_bad_n() {
        assert_eq!(
            transition_points(&[1e-6, 1e-4], 0.9, 48).unwrap_err(),
            MeshError::BadN { n_intervals: 48, n: 2 }
        );
    }

    #[test]
    fn mesh_piece_counts() {
        let sigma = transition_points(&[1e-6, 1e-4], 0.9, 64).unwrap();
        let mesh = build_space_mesh(&sigma, 64).unwrap();
        assert_eq!(mesh.piece_counts, vec![8, 8, 32, 8, 8]);
        assert_eq!(mesh.nodes.len(), 65);
        assert_eq!(mesh.nodes[0], 0.0);
        assert_eq!(mesh.nodes[64], 1.0);
        assert_eq!(mesh.nodes[8], sigma[0]);
        assert_eq!(mesh.nodes[16], sigma[1]);
        assert_eq!(mesh.nodes[32], 0.5);
        assert_eq!(mesh.change_points, vec![8, 16, 48, 56]);
        for j in 1..=8 {
            assert!(rel(mesh.h(j), sigma[0] / 8.0) < 1e-12);
        }
        // second piece follows h = 2^(n-r+3) N^-1 (sigma_r - sigma_{r-1}) with r = 2
        for j in 9..=16 {
            assert!(rel(mesh.h(j), 8.0 / 64.0 * (sigma[1] - sigma[0])) < 1e-12);
        }
    }

    #[test]
    fn three_parameter_counts() {
        let mesh = shishkin_mesh(&[1e-8, 1e-6, 1e-4], 0.9, 64).unwrap();
        assert_eq!(mesh.piece_counts, vec![4, 4, 8, 32, 8, 4, 4]);
        assert_eq!(mesh.piece_counts.iter().sum::<usize>(), 64);
    }

    #[test]
    fn degenerate_mesh_is_uniform() {
        let sigma = transition_points(&[0.016, 0.0225], 0.9, 16).unwrap();
        let mesh = build_space_mesh(&sigma, 16).unwrap();
        assert!(mesh.change_points.is_empty());
        for h in &mesh.widths {
            assert!((h - 1.0 / 16.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn mesh_symmetry() {
        let mesh = shishkin_mesh(&[1e-7, 3e-5, 2e-3], 1.3, 256).unwrap();
        for j in 0..=128 {
            assert_eq!(mesh.nodes[256 - j], 1.0 - mesh.nodes[j]);
        }
    }

    #[test]
    fn bad_sigma_rejected() {
        assert!(build_space_mesh(&[0.2, 0.1], 16).is_err());
        assert!(build_space_mesh(&[0.1, 0.3], 16).is_err());
        assert!(build_space_mesh(&[0.0, 0.1], 16).is_err());
    }

    #[test]
    fn time_mesh_examples() {
        assert_eq!(build_time_mesh(1.0, 4).unwrap().nodes, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(build_time_mesh(2.0, 1).unwrap().nodes, vec![0.0, 2.0]);
        assert!(matches!(build_time_mesh(1.0, 0), Err(MeshError::BadTimeMesh { .. })));
        assert!(build_time_mesh(-1.0, 3).is_err());
    }

    #[test]
    fn layer_function_values() {
        let eps = [1e-6, 1e-4];
        assert_eq!(layer_function(LayerSide::Left, 0, 0.0, &eps, 0.9), 1.0);
        assert_eq!(layer_function(LayerSide::Right, 1, 1.0, &eps, 0.9), 1.0);
        let x = 2.0 * (1e-4_f64 / 0.9).sqrt() * 64f64.ln();
        assert!(rel(layer_function(LayerSide::Left, 1, x, &eps, 0.9), 64f64.powi(-2)) < 1e-12);
        let both = layer_function(LayerSide::Both, 1, 0.5, &eps, 0.9);
        assert_eq!(both, 2.0 * layer_function(LayerSide::Left, 1, 0.5, &eps, 0.9));
        // deep inside the domain the smallest layer underflows to zero
        assert_eq!(layer_function(LayerSide::Left, 0, 0.9, &[1e-8], 1.0), 0.0);
    }

    #[test]
    fn interleaving_point_example() {
        let eps = [1e-6, 1e-4];
        let p = interleaving_point(0, 1, 1.0, &eps, 0.9).unwrap();
        let expected = 2.0 * 10f64.ln() / (0.9f64.sqrt() * 900.0);
        assert!(rel(p.x, expected) < 1e-13);
        assert!(rel(p.x, 0.0053937) < 1e-4);
        assert!(p.x < 2.0 * (1e-4_f64 / 0.9).sqrt());
        assert!(balance_residual(&p, &eps, 0.9) < 1e-12);
        // direct substitution
        let lhs = layer_function(LayerSide::Left, 0, p.x, &eps, 0.9) / eps[0];
        let rhs = layer_function(LayerSide::Left, 1, p.x, &eps, 0.9) / eps[1];
        assert!(rel(lhs, rhs) < 1e-12);
    }

    #[test]
    fn interleaving_ordering_three_parameters() {
        let eps = [1e-6, 1e-5, 1e-4];
        let x = |i, j| interleaving_point(i, j, 1.0, &eps, 0.9).unwrap().x;
        assert!(x(0, 1) < x(0, 2));
        assert!(x(0, 2) < x(1, 2));
    }

    #[test]
    fn interleaving_preconditions() {
        let eps = [1e-6, 1e-4];
        assert!(interleaving_point(1, 0, 1.0, &eps, 0.9).is_err());
        assert!(interleaving_point(0, 1, 0.0, &eps, 0.9).is_err());
        assert!(interleaving_point(0, 1, 1.6, &eps, 0.9).is_err());
        assert!(interleaving_point(0, 2, 1.0, &eps, 0.9).is_err());
    }

    #[test]
    fn geometry_degenerate() {
        let mesh = shishkin_mesh(&[0.016, 0.0225], 0.9, 16).unwrap();
        let report = mesh_geometry_report(&mesh, &[0.016, 0.0225], 0.9);
        assert!(report.uniform);
        assert!(report.transitions.iter().all(|g| g.d == 0.0 && g.layer_value.is_none()));
        assert!(report.passed());
    }

    #[test]
    fn geometry_layer_regime() {
        let eps = [1e-6, 1e-4];
        let mesh = shishkin_mesh(&eps, 0.9, 64).unwrap();
        let report = mesh_geometry_report(&mesh, &eps, 0.9);
        assert!(report.passed(), "{report:?}");
        let g1 = &report.transitions[0];
        let g2 = &report.transitions[1];
        assert!(g1.d > 0.0 && g2.d > 0.0);
        assert!(rel(g2.layer_value.unwrap(), 64f64.powi(-2)) < 1e-10);
        let half = g2.interleaving_checks.iter().find(|c| c.0 == 0.5).unwrap();
        assert!(half.1 <= mesh.sigma[1] - mesh.h(mesh.sigma_index(1)));
        assert!(half.2);
        assert!(g1.growth_witness.unwrap() >= 1.0);
    }
}
