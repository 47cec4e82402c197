//! Every analytic model Jacobian against central finite differences through
//! the right perturbation.

mod common;

use common::*;
use lgpose_core::biomech::*;
use lgpose_core::lie::{Rotation3, Vec3};
use lgpose_core::oracle::{numeric_jacobian, numeric_rotation_jacobian};
use lgpose_core::state::{state_log, PoseState, Segment};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-5;
const MAX_ANGLE: f64 = 170.0 * std::f64::consts::PI / 180.0;

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn check(analytic: DMatrix<f64>, numeric: DMatrix<f64>) -> Result<(), TestCaseError> {
    let err = (&analytic - &numeric).abs().max();
    prop_assert!(err < TOL, "max deviation {:.3e}\nanalytic {}\nnumeric {}", err, analytic, numeric);
    Ok(())
}

fn imu(rots: [Rotation3; 3], acc: [Vec3; 3]) -> ImuFrame {
    ImuFrame {
        t: 0.0,
        acc_p: acc[0],
        acc_ls: acc[1],
        acc_rs: acc[2],
        rot_p: rots[0],
        rot_ls: rots[1],
        rot_rs: rots[2],
        fc_left: true,
        fc_right: true,
    }
}

fn body() -> BodyParams {
    BodyParams::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn motion_jacobian(x in state(MAX_ANGLE, 2.0), rots in prop::array::uniform3(rotation(MAX_ANGLE)), acc in prop::array::uniform3(vec3(10.0))) {
        let frame = imu(rots, acc);
        let dt = 0.01;
        let numeric = numeric_jacobian(|s| DVector::from_column_slice(omega(s, &frame, dt).as_slice()), &x, STEP);
        check(to_dmatrix(&lgpose_core::biomech::motion_jacobian(&frame, dt)), numeric)?;
    }

    #[test]
    fn orientation_jacobian(x in state(MAX_ANGLE, 2.0)) {
        let numeric = numeric_rotation_jacobian(|s| h_ori(s).to_vec(), &x, STEP);
        check(to_dmatrix(&ori_jacobian()), numeric)?;
    }

    #[test]
    fn pelvis_height_jacobian(x in state(MAX_ANGLE, 2.0)) {
        let numeric = numeric_jacobian(|s| scalar(h_mp(s)), &x, STEP);
        check(to_dmatrix(&mp_jacobian(&x)), numeric)?;
    }

    #[test]
    fn contact_jacobians(x in state(MAX_ANGLE, 2.0)) {
        for side in Side::BOTH {
            let numeric = numeric_jacobian(|s| DVector::from_column_slice(h_fc(s, side).as_slice()), &x, STEP);
            check(to_dmatrix(&fc_jacobian(&x, side)), numeric)?;
        }
    }

    #[test]
    fn limiter_jacobian_matches(x in state(MAX_ANGLE, 2.0)) {
        let base = x;
        let pose_error = |s: &PoseState| {
            let e = state_log(&base.inverse().compose(s)).unwrap();
            DVector::from_column_slice(&e.as_slice()[..18])
        };
        let numeric = numeric_jacobian(pose_error, &x, STEP);
        check(to_dmatrix(&limiter_jacobian()), numeric)?;
    }

    #[test]
    fn thigh_length_jacobians(x in state(MAX_ANGLE, 2.0)) {
        let b = body();
        for side in Side::BOTH {
            let numeric = numeric_jacobian(|s| scalar(c_ltl(s, &b, side)), &x, STEP);
            check(to_dmatrix(&ltl_jacobian(&x, &b, side)), numeric)?;
        }
    }

    #[test]
    fn hinge_jacobians(x in state(MAX_ANGLE, 2.0)) {
        let b = body();
        for side in Side::BOTH {
            let numeric = numeric_jacobian(|s| scalar(c_lkh(s, &b, side)), &x, STEP);
            check(to_dmatrix(&lkh_jacobian(&x, &b, side)), numeric)?;
        }
    }

    #[test]
    fn rom_jacobians(x in state(MAX_ANGLE, 2.0), alpha in -0.5..3.5f64) {
        let b = body();
        for side in Side::BOTH {
            let numeric = numeric_jacobian(|s| scalar(c_lkr(s, &b, side, alpha)), &x, STEP);
            check(to_dmatrix(&lkr_jacobian(&x, &b, side, alpha)), numeric)?;
        }
    }

    #[test]
    fn structural_zeros(x in state(MAX_ANGLE, 2.0), alpha in 0.0..3.0f64) {
        let b = body();
        let mp = mp_jacobian(&x);
        prop_assert_eq!(mp.columns(6, 21).abs().max(), 0.0);
        prop_assert_eq!(mp.columns(3, 3).abs().max(), 0.0);
        let left = fc_jacobian(&x, Side::Left);
        prop_assert_eq!(left.view((0, 0), (3, 21)).abs().max(), 0.0);
        prop_assert_eq!(left.view((0, 24), (4, 3)).abs().max(), 0.0);
        prop_assert_eq!(left.view((3, 18), (1, 9)).abs().max(), 0.0);
        for row in [ltl_jacobian(&x, &b, Side::Left), lkh_jacobian(&x, &b, Side::Left), lkr_jacobian(&x, &b, Side::Left, alpha)] {
            prop_assert_eq!(row.columns(12, 15).abs().max(), 0.0);
        }
        for row in [ltl_jacobian(&x, &b, Side::Right), lkh_jacobian(&x, &b, Side::Right), lkr_jacobian(&x, &b, Side::Right, alpha)] {
            prop_assert_eq!(row.columns(6, 6).abs().max(), 0.0);
            prop_assert_eq!(row.columns(18, 9).abs().max(), 0.0);
        }
    }

    #[test]
    fn knee_angle_is_invariant_to_rigid_motion(x in state(MAX_ANGLE, 2.0), g in pose(std::f64::consts::PI, 3.0)) {
        let b = body();
        let mut moved = x;
        for seg in Segment::ALL {
            *moved.pose_mut(seg) = g * *x.pose(seg);
        }
        for side in Side::BOTH {
            if let (Ok(a0), Ok(a1)) = (knee_angle(&x, &b, side), knee_angle(&moved, &b, side)) {
                let diff = (a0 - a1).abs();
                prop_assert!(diff < 1e-12 || (diff - std::f64::consts::TAU).abs() < 1e-12, "{} vs {}", a0, a1);
            }
        }
    }

    #[test]
    fn thigh_vector_matches_joint_positions(x in state(MAX_ANGLE, 2.0)) {
        let b = body();
        for side in Side::BOTH {
            let sign = if side == Side::Left { 1.0 } else { -1.0 };
            let hip = x.pelvis.rot.rotate(&Vec3::new(0.0, sign * b.d_pelvis / 2.0, 0.0)) + x.pelvis.trans;
            let shank = x.pose(side.shank());
            let knee = shank.rot.axis(2) * b.shank_length(side) + shank.trans;
            prop_assert!((thigh_vector(&x, &b, side) - (hip - knee)).norm() < 1e-12);
            let shifted = x.translated(&Vec3::new(0.4, -1.2, 3.0));
            prop_assert!((thigh_vector(&shifted, &b, side) - (hip - knee)).norm() < 1e-12);
        }
    }

    #[test]
    fn reconstructed_thigh_is_orthonormal_and_hinged(x in state(MAX_ANGLE, 2.0)) {
        let b = body();
        for side in Side::BOTH {
            let thigh = thigh_orientation(&x, &b, side).unwrap();
            let m = thigh.matrix();
            prop_assert!((m.transpose() * m - nalgebra::Matrix3::identity()).abs().max() < 1e-12);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
            // The thigh's own lateral axis is orthogonal to the thigh vector.
            prop_assert!(thigh.axis(1).dot(&thigh_vector(&x, &b, side)).abs() < 1e-12);
        }
    }
}

#[test]
fn finite_differences_converge_at_second_order() {
    let b = body();
    let mut x = PoseState::identity();
    x.pelvis.rot = Rotation3::exp(&Vec3::new(0.4, -0.3, 1.2));
    x.pelvis.trans = Vec3::new(0.3, 0.1, 0.9);
    x.left_shank.rot = Rotation3::exp(&Vec3::new(-0.2, 0.5, 0.3));
    x.left_shank.trans = Vec3::new(0.2, 0.2, 0.1);
    let analytic = to_dmatrix(&lkh_jacobian(&x, &b, Side::Left));
    let err = |h: f64| (numeric_jacobian(|s| scalar(c_lkh(s, &b, Side::Left)), &x, h) - &analytic).abs().max();
    let (coarse, fine) = (err(2e-2), err(1e-2));
    let ratio = coarse / fine;
    assert!((3.5..4.5).contains(&ratio), "Richardson ratio {ratio} ({coarse:.3e} / {fine:.3e})");
}
