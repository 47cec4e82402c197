//! Filter steps against independent oracles: Monte-Carlo propagation,
//! decoupled scalar Kalman updates and direct geometric checks.

mod common;

use common::*;
use lgpose_core::biomech::*;
use lgpose_core::filter::*;
use lgpose_core::lie::{so3_exp, so3_hat, Rotation3, Vec3};
use lgpose_core::sim::{generate, GaitParams, NoiseStream, PathKind};
use lgpose_core::state::*;
use proptest::prelude::*;
use std::f64::consts::PI;

fn frame_at(rots: [Rotation3; 3], acc: [Vec3; 3], contact: bool) -> ImuFrame {
    ImuFrame {
        t: 0.0,
        acc_p: acc[0],
        acc_ls: acc[1],
        acc_rs: acc[2],
        rot_p: rots[0],
        rot_ls: rots[1],
        rot_rs: rots[2],
        fc_left: contact,
        fc_right: contact,
    }
}

#[test]
fn predicted_covariance_matches_monte_carlo() {
    const SAMPLES: u64 = 100_000;
    let stream = NoiseStream::new(7);
    let mut draw = {
        let mut n = 0u64;
        move || {
            n += 1;
            stream.normal(n, 999)
        }
    };

    let mut mu = PoseState::identity();
    mu.pelvis.rot = so3_exp(&Vec3::new(0.2, -0.4, 1.1));
    mu.left_shank.rot = so3_exp(&Vec3::new(-1.3, 0.3, 0.2));
    mu.right_shank.rot = so3_exp(&Vec3::new(0.5, 2.0, -0.6));
    mu.v_pelvis = Vec3::new(1.2, -0.3, 0.1);
    mu.v_ls = Vec3::new(0.4, 0.9, -0.5);
    mu.v_rs = Vec3::new(-0.8, 0.2, 0.6);
    let frame = frame_at(
        [
            so3_exp(&Vec3::new(0.1, 0.2, 0.3)),
            so3_exp(&Vec3::new(-0.7, 0.0, 1.4)),
            so3_exp(&Vec3::new(0.0, -2.2, 0.3)),
        ],
        [Vec3::new(2.0, -1.0, 0.5), Vec3::new(-3.0, 4.0, 1.0), Vec3::new(0.5, 0.5, -6.0)],
        false,
    );
    let dt = 0.05;

    let mut a = Cov::zeros();
    a.iter_mut().for_each(|v| *v = 2e-3 * draw());
    let p0 = a * a.transpose() + Cov::identity() * 1e-5;
    let cfg = FilterConfig {
        noise: NoiseParams {
            acc_var: [0.04; 9],
            qori_var: [1e-4; 9],
            ..NoiseParams::default()
        },
        ..FilterConfig::default()
    };
    let predicted = predict(&Belief::new(mu, p0), &frame, dt, &cfg).unwrap();

    let chol = p0.cholesky().unwrap().l();
    let q_std = process_noise(&cfg.noise, dt).map_diagonal(f64::sqrt);
    let mut sum = Cov::zeros();
    let stream = NoiseStream::new(11);
    for n in 0..SAMPLES {
        let z = ErrorVec::from_fn(|i, _| stream.normal(n, i as u64));
        let w = ErrorVec::from_fn(|i, _| q_std[i] * stream.normal(n, 27 + i as u64));
        let x = perturb(&mu, &(chol * z));
        let next = perturb(&x, &(omega(&x, &frame, dt) + w));
        let e = state_log(&predicted.mu.inverse().compose(&next)).unwrap();
        sum += e * e.transpose();
    }
    let empirical = sum / SAMPLES as f64;
    let rel = (empirical - predicted.cov).norm() / predicted.cov.norm();
    assert!(rel < 0.05, "relative Frobenius deviation {rel}");
}

/// Standing pose with identity orientations and exact measurements.
fn neutral(body: &BodyParams) -> PoseState {
    let mut x = PoseState::identity();
    x.pelvis.trans = Vec3::new(0.0, 0.0, body.z_pelvis);
    x.left_shank.trans = Vec3::new(0.0, 0.1, body.z_floor);
    x.right_shank.trans = Vec3::new(0.0, -0.1, body.z_floor);
    x
}

fn identity_frame() -> ImuFrame {
    frame_at([Rotation3::identity(); 3], [Vec3::zeros(); 3], true)
}

/// Per-coordinate measurement variance when the coordinate is observed alone.
fn observed_variance(noise: &NoiseParams, i: usize) -> Option<f64> {
    match i {
        3..=5 => Some(noise.ori_var[i - 3]),
        9..=11 => Some(noise.ori_var[i - 6]),
        15..=17 => Some(noise.ori_var[i - 9]),
        2 => Some(noise.mp_var),
        8 => Some(noise.ls_var[3]),
        14 => Some(noise.rs_var[3]),
        21..=23 => Some(noise.ls_var[i - 21]),
        24..=26 => Some(noise.rs_var[i - 24]),
        _ => None,
    }
}

fn scalar_posterior(prior: f64, i: usize, noise: &NoiseParams, limiter: bool) -> f64 {
    let mut info = 1.0 / prior;
    if let Some(r) = observed_variance(noise, i) {
        info += 1.0 / r;
    }
    if limiter && i < POSE_DIM {
        info += 1.0 / noise.lim_var[i];
    }
    1.0 / info
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn update_decouples_into_scalar_filters(prior in prop::collection::vec(0.01..2.0f64, 27), limiter: bool) {
        let cfg = FilterConfig { limiter, ..FilterConfig::default() };
        let cov = Cov::from_diagonal(&ErrorVec::from_column_slice(&prior));
        let (post, info) = measurement_update(&Belief::new(neutral(&cfg.body), cov), &identity_frame(), &cfg).unwrap();
        prop_assert_eq!(info.rows, 18);
        prop_assert_eq!(info.correction, ErrorVec::zeros());
        for i in 0..STATE_DIM {
            for j in 0..STATE_DIM {
                let expected = if i == j { scalar_posterior(prior[i], i, &cfg.noise, limiter) } else { 0.0 };
                prop_assert!((post.cov[(i, j)] - expected).abs() < 1e-9, "({}, {}) {} vs {}", i, j, post.cov[(i, j)], expected);
            }
        }
    }

    #[test]
    fn height_innovation_moves_only_the_pelvis(prior in prop::collection::vec(0.01..2.0f64, 27), offset in -0.2..0.2f64, limiter: bool) {
        let cfg = FilterConfig { limiter, ..FilterConfig::default() };
        let cov = Cov::from_diagonal(&ErrorVec::from_column_slice(&prior));
        let mut x = neutral(&cfg.body);
        x.pelvis.trans.z += offset;
        let (post, info) = measurement_update(&Belief::new(x, cov), &identity_frame(), &cfg).unwrap();

        let gain = prior[2] / (prior[2] + cfg.noise.mp_var);
        let mut nu = ErrorVec::zeros();
        nu[2] = -gain * offset;
        prop_assert!((info.correction - nu).norm() < 1e-12);
        prop_assert!((post.mu.pelvis.trans.z - (cfg.body.z_pelvis + offset * (1.0 - gain))).abs() < 1e-12);

        // A pure translation step has a nilpotent small adjoint, so the
        // right Jacobian truncates to I - ad/2.
        let mut jr = Cov::identity();
        jr.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-0.5 * so3_hat(&nu.fixed_rows::<3>(0).into_owned())));
        let reduced = Cov::from_fn(|i, j| if i == j { scalar_posterior(prior[i], i, &cfg.noise, limiter) } else { 0.0 });
        let expected = jr * reduced * jr.transpose();
        prop_assert!((post.cov - expected).abs().max() < 1e-9);
    }

    #[test]
    fn knee_angle_invariant_under_rigid_motion(g in pose(PI, 5.0), flex in 0.0..2.5f64) {
        let body = BodyParams::default();
        let x = bent_legs(&body, flex, 0.0);
        let mut moved = x;
        for seg in Segment::ALL {
            *moved.pose_mut(seg) = g * *x.pose(seg);
        }
        for side in Side::BOTH {
            let a0 = knee_angle(&x, &body, side).unwrap();
            let a1 = knee_angle(&moved, &body, side).unwrap();
            prop_assert!((a0 - a1).abs() < 1e-9, "{} vs {}", a0, a1);
        }
        prop_assert!((knee_angle(&x, &body, Side::Left).unwrap() - flex).abs() < 1e-12);
    }

    #[test]
    fn projection_converges_quadratically_off_the_rom_bounds(e in error_vec(0.05), scale in 0.05..1.0f64) {
        let cfg = FilterConfig::default();
        let belief = Belief::new(perturb(&bent_legs(&cfg.body, 0.6, 0.9), &e), Cov::identity() * scale);
        let before = assemble_constraints(&belief.mu, &cfg.body).unwrap().residual.norm();
        let (once, _) = constraint_update(&belief, &cfg).unwrap();
        let after = assemble_constraints(&once.mu, &cfg.body).unwrap().residual.norm();
        prop_assert!(after < before && after <= 10.0 * before * before, "{} -> {}", before, after);
        prop_assert_eq!(once.cov, belief.cov);

        let (twice, _) = constraint_update(&once, &cfg).unwrap();
        let again = assemble_constraints(&twice.mu, &cfg.body).unwrap().residual.norm();
        prop_assert!(again <= 10.0 * after * after + 1e-12, "{} -> {}", after, again);
    }

    #[test]
    fn projection_fixes_feasible_states(flex in 0.0..2.5f64, scale in 0.05..1.0f64) {
        let cfg = FilterConfig::default();
        let x = bent_legs(&cfg.body, flex, 0.3);
        let (out, info) = constraint_update(&Belief::new(x, Cov::identity() * scale), &cfg).unwrap();
        prop_assert!(info.correction.norm() < 1e-12);
        prop_assert!(state_distance(&out.mu, &x) < 1e-12);
    }
}

/// Both shanks upright, thighs leaning so the knees sit at the given angles.
fn bent_legs(body: &BodyParams, left: f64, right: f64) -> PoseState {
    let mut x = PoseState::identity();
    x.pelvis.trans = Vec3::new(0.0, 0.0, body.z_pelvis);
    for side in Side::BOTH {
        let hip = x.pelvis.transform_homogeneous(&body.hip_point(side)).xyz();
        let angle = if side == Side::Left { left } else { right };
        let thigh = body.thigh_length(side) * Vec3::new(-angle.sin(), 0.0, angle.cos());
        let knee = hip - thigh;
        x.pose_mut(side.shank()).trans = knee - Vec3::new(0.0, 0.0, body.shank_length(side));
    }
    x
}

#[test]
fn hyperextended_knee_is_pulled_into_range() {
    let cfg = FilterConfig::default();
    let x = bent_legs(&cfg.body, -5f64.to_radians(), 0.2);
    assert!((knee_angle(&x, &cfg.body, Side::Left).unwrap() + 5f64.to_radians()).abs() < 1e-12);
    let (out, info) = constraint_update(&cfg.initial_belief(x), &cfg).unwrap();
    assert!(info.constraints.rom_active(Side::Left));
    assert!(!info.constraints.rom_active(Side::Right));
    let alpha = knee_angle(&out.mu, &cfg.body, Side::Left).unwrap();
    assert!(alpha >= -0.5f64.to_radians(), "knee at {} deg", alpha.to_degrees());
}

#[test]
fn filter_commutes_with_horizontal_translation() {
    let truth = generate(&GaitParams {
        duration: 2.0,
        path: PathKind::FigureEight,
        ..GaitParams::default()
    })
    .unwrap();
    let offset = Vec3::new(3.5, -2.0, 0.0);
    let moved = truth.translated(&offset);
    let cfg = FilterConfig::default();
    let (a, _) = run_filter(&truth.imu_frames(), cfg.initial_belief(truth.states[0]), &cfg).unwrap();
    let (b, _) = run_filter(&moved.imu_frames(), cfg.initial_belief(moved.states[0]), &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let back = y.translated(&-offset);
        for seg in Segment::ALL {
            assert!((x.pose(seg).trans - back.pose(seg).trans).norm() < 1e-9);
            assert!((x.pose(seg).rot.matrix() - back.pose(seg).rot.matrix()).abs().max() < 1e-9);
            assert!((x.velocity(seg) - back.velocity(seg)).norm() < 1e-9);
        }
    }
}

#[test]
fn rest_prediction_keeps_the_mean() {
    let cfg = FilterConfig::default();
    let x = neutral(&cfg.body);
    let out = predict(&cfg.initial_belief(x), &identity_frame(), 0.01, &cfg).unwrap();
    assert_eq!(out.mu, x);
    let c = motion_jacobian(&identity_frame(), 0.01);
    let f = Cov::identity() + c;
    let expected = f * (Cov::identity() * cfg.p0_scale) * f.transpose() + process_noise(&cfg.noise, 0.01);
    assert!((out.cov - expected).abs().max() < 1e-12);
}
