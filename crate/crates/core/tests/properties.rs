use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shishkin::mesh::{
    balance_residual, build_time_mesh, interleaving_point, layer_function, mesh_geometry_report, shishkin_mesh, transition_points,
    LayerSide,
};
use shishkin::suites::{random_dominant_system, random_nonnegative_problem};
use shishkin::{assemble_step, block_thomas_solve, dense_solve_oracle, march};

/// Strictly increasing parameters with the largest below `alpha / 36`.
fn eps_strategy(max_n: usize) -> impl Strategy<Value = (Vec<f64>, f64)> {
    (1..=max_n, 0.3f64..3.0).prop_flat_map(|(n, alpha)| {
        let top = (-14.0f64..(0.99 * alpha / 36.0).ln()).prop_map(f64::exp);
        (top, prop::collection::vec(1.05f64..200.0, n - 1), Just(alpha)).prop_map(|(top, ratios, alpha)| {
            let mut eps = vec![top];
            for r in ratios {
                let next = eps[0] / r;
                eps.insert(0, next);
            }
            (eps, alpha)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn shishkin_mesh_invariants((eps, alpha) in eps_strategy(4), extra in 1u32..6) {
        let n = eps.len();
        let big_n = 1usize << (n as u32 + extra + 1);
        let mesh = shishkin_mesh(&eps, alpha, big_n).unwrap();
        prop_assert_eq!(mesh.nodes.len(), big_n + 1);
        prop_assert_eq!(mesh.nodes[0], 0.0);
        prop_assert_eq!(mesh.nodes[big_n], 1.0);
        prop_assert!(mesh.nodes.windows(2).all(|w| w[0] < w[1]));
        for j in 0..=big_n / 2 {
            prop_assert_eq!(mesh.nodes[big_n - j], 1.0 - mesh.nodes[j]);
        }
        prop_assert_eq!(mesh.piece_counts.iter().sum::<usize>(), big_n);
        prop_assert_eq!(mesh.piece_counts[n], big_n / 2);
        // at most 2n width changes, symmetric about the midpoint
        prop_assert!(mesh.change_points.len() <= 2 * n);
        for (a, b) in mesh.change_points.iter().zip(mesh.change_points.iter().rev()) {
            prop_assert_eq!(a + b, big_n);
        }
        prop_assert!(mesh_geometry_report(&mesh, &eps, alpha).passed());
    }

    #[test]
    fn transition_points_follow_the_recursion((eps, alpha) in eps_strategy(5), extra in 1u32..8) {
        let n = eps.len();
        let big_n = 1usize << (n as u32 + extra + 1);
        let sigma = transition_points(&eps, alpha, big_n).unwrap();
        let ln_n = (big_n as f64).ln();
        let mut cap = 0.25;
        for r in (0..n).rev() {
            let layer = 2.0 * (eps[r] / alpha).sqrt() * ln_n;
            prop_assert_eq!(sigma[r], layer.min(cap));
            if layer < cap {
                // the layer function has decayed to N^-2 exactly at sigma_r
                let b = layer_function(LayerSide::Left, r, sigma[r], &eps, alpha);
                let target = (big_n as f64).powi(-2);
                prop_assert!((b - target).abs() <= 1e-10 * target, "r = {}: {} vs {}", r, b, target);
            }
            cap = sigma[r] / 2.0;
        }
    }

    #[test]
    fn interleaving_balance((eps, alpha) in eps_strategy(5), s in 0.05f64..=1.5) {
        let n = eps.len();
        for i in 0..n {
            for j in i + 1..n {
                let point = interleaving_point(i, j, s, &eps, alpha).unwrap();
                prop_assert!(balance_residual(&point, &eps, alpha) <= 1e-10);
                prop_assert!(point.x > 0.0 && point.x < 2.0 * s * (eps[j] / alpha).sqrt());
            }
        }
    }

    #[test]
    fn block_thomas_matches_dense(seed in any::<u64>(), n in 1usize..=4, len in 1usize..=40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_dominant_system(&mut rng, n, len);
        let a = block_thomas_solve(&sys).unwrap();
        let b = dense_solve_oracle(&sys).unwrap();
        let scale = b.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let diff = a.iter().flatten().zip(b.iter().flatten()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        prop_assert!(diff / scale <= 1e-10);
    }

    /// The assembled matrix is inverse-nonnegative, checked on the dense inverse.
    #[test]
    fn assembled_matrix_is_inverse_positive(seed in any::<u64>(), extra in 1u32..3, m in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_nonnegative_problem(&mut rng, 3);
        let n = problem.n();
        let big_n = 1usize << (n as u32 + extra + 1);
        let space = shishkin_mesh(problem.eps(), problem.alpha, big_n).unwrap();
        let time = build_time_mesh(problem.t_end(), m).unwrap();
        let sys = assemble_step(&problem, &space, &time, 1, &vec![0.0; (big_n + 1) * n]);
        let (size, data) = sys.to_dense();
        let inverse = DMatrix::from_row_slice(size, size, &data).try_inverse().unwrap();
        let max = inverse.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = inverse.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-12 * max, "min inverse entry {} (max {})", min, max);
    }
}

#[test]
fn first_time_level_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let problem = random_nonnegative_problem(&mut rng, 3);
        let n = problem.n();
        let big_n = 1usize << (n + 3);
        let space = shishkin_mesh(problem.eps(), problem.alpha, big_n).unwrap();
        let time = build_time_mesh(problem.t_end(), 4).unwrap();
        let sol = march(&problem, &space, &time).unwrap();
        let prev: Vec<f64> = sol.values.level(0).to_vec();
        let sys = assemble_step(&problem, &space, &time, 1, &prev);
        let dense = dense_solve_oracle(&sys).unwrap();
        for (j, block) in dense.iter().enumerate() {
            for (i, v) in block.iter().enumerate() {
                let u = sol.at(j + 1, 1)[i];
                assert!(
                    (u - v).abs() <= 1e-12 * (1.0 + v.abs()),
                    "node {}, component {i}: {u} vs {v}",
                    j + 1
                );
            }
        }
    }
}
