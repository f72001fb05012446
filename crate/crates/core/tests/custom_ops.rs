mod common;

use common::{lift, probe, rand_tensor, run_cases};
use hoitg_core::{axis_angle_matrix, grid_sample, rodrigues};
use hoitg_diffcore::gradcheck::check_gradients;
use hoitg_diffcore::{Graph, Tensor};
use hoitg_meshkit::RigidPose;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample_values(feat: Tensor<f64>, pts: &[[f64; 2]]) -> Vec<f64> {
    let mut g = Graph::new();
    let f = g.constant(feat);
    let p = g.constant_from(vec![pts.len(), 2], pts.iter().flatten().copied().collect()).unwrap();
    let y = grid_sample(&mut g, f, p).unwrap();
    g.value(y).to_vec()
}

/// Channel c at (row, col) of a 2-channel 3×4 grid.
fn grid_3x4() -> Tensor<f64> {
    let data = (0..2).flat_map(|c| (0..12).map(move |i| (c * 100 + i) as f64)).collect();
    Tensor::new(vec![2, 3, 4], data).unwrap()
}

// ── grid sampling ────────────────────────────────────────────────────

#[test]
fn grid_node_returns_node_feature() {
    // Column 2 of 4 sits at x = 2/3·2 − 1; row 1 of 3 at y = 0.
    let x = 2.0 * 2.0 / 3.0 - 1.0;
    let out = sample_values(grid_3x4(), &[[x, 0.0], [-1.0, 1.0], [1.0, -1.0]]);
    assert!((out[0] - 6.0).abs() < 1e-12 && (out[1] - 106.0).abs() < 1e-12);
    assert!((out[2] - 0.0).abs() < 1e-12 && (out[3] - 100.0).abs() < 1e-12);
    assert!((out[4] - 11.0).abs() < 1e-12 && (out[5] - 111.0).abs() < 1e-12);
}

#[test]
fn center_of_constant_patch_and_midpoint() {
    let feat = Tensor::new(vec![1, 2, 2], vec![3.5; 4]).unwrap();
    let out = sample_values(feat, &[[0.0, 0.0]]);
    assert!((out[0] - 3.5).abs() < 1e-12);

    let feat = Tensor::new(vec![1, 2, 2], vec![1.0, 5.0, 1.0, 5.0]).unwrap();
    let out = sample_values(feat, &[[0.0, 1.0], [0.0, -0.3]]);
    assert!((out[0] - 3.0).abs() < 1e-12);
    assert!((out[1] - 3.0).abs() < 1e-12);
}

#[test]
fn out_of_range_points_clamp_to_border() {
    let inside = sample_values(grid_3x4(), &[[1.0, 0.2], [-1.0, -1.0]]);
    let outside = sample_values(grid_3x4(), &[[3.0, 0.2], [-7.0, -2.0]]);
    for (a, b) in inside.iter().zip(&outside) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn grid_sample_rejects_bad_shapes() {
    let mut g = Graph::<f64>::new();
    let f = g.constant(Tensor::zeros(vec![2, 3]));
    let p = g.constant(Tensor::zeros(vec![4, 2]));
    assert!(grid_sample(&mut g, f, p).is_err());
    let f = g.constant(Tensor::zeros(vec![2, 3, 3]));
    let p = g.constant(Tensor::zeros(vec![4, 3]));
    assert!(grid_sample(&mut g, f, p).is_err());
}

#[test]
fn grid_sample_gradients() {
    run_cases("grid_sample", |rng| {
        let c = rng.random_range(1..4);
        let h = rng.random_range(2..6);
        let w = rng.random_range(2..6);
        let n = rng.random_range(1..6);
        let feat = rand_tensor(rng, &[c, h, w], 1.0);
        // Mostly interior points, some beyond the border.
        let pts = rand_tensor(rng, &[n, 2], 1.2);
        check_gradients(
            |g, v| {
                let y = lift(grid_sample(g, v[0], v[1]))?;
                probe(g, y)
            },
            &[feat, pts],
            16,
            rng.random(),
        )
        .unwrap()
    });
}

// ── rodrigues ────────────────────────────────────────────────────────

#[test]
fn rodrigues_matches_rigid_pose_and_is_a_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let aa: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let r = axis_angle_matrix(aa);
        let reference = RigidPose::from_axis_angle(aa, [0.0; 3]);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[i][j] - reference.rotation[i][j]).abs() < 1e-12);
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                assert!((dot - f64::from(u8::from(i == j))).abs() < 1e-12);
            }
        }
    }
    let id = axis_angle_matrix([0.0; 3]);
    assert_eq!(id, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
}

#[test]
fn rodrigues_is_continuous_across_the_series_cutoff() {
    let below = axis_angle_matrix([0.0, 0.0, 0.01 - 1e-12]);
    let above = axis_angle_matrix([0.0, 0.0, 0.01 + 1e-12]);
    for i in 0..3 {
        for j in 0..3 {
            assert!((below[i][j] - above[i][j]).abs() < 1e-11);
        }
    }
}

#[test]
fn rodrigues_gradients() {
    run_cases("rodrigues", |rng| {
        // A fifth of the cases exercise the small-angle series.
        let scale = if rng.random_bool(0.2) { 0.004 } else { 2.5 };
        let aa = rand_tensor(rng, &[3], scale);
        check_gradients(
            |g, v| {
                let r = lift(rodrigues(g, v[0]))?;
                probe(g, r)
            },
            &[aa],
            3,
            rng.random(),
        )
        .unwrap()
    });
}
