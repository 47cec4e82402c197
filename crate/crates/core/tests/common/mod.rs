#![allow(dead_code)]

use lgpose_core::lie::{so3_exp, Pose3, Rotation3, Vec3, Vec4, Vec6};
use lgpose_core::state::{ErrorVec, PoseState};
use nalgebra::{DMatrix, SMatrix};
use proptest::prelude::*;

pub fn to_dmatrix<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

pub fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-range..range).prop_map(Vec3::from)
}

pub fn vec4(range: f64) -> impl Strategy<Value = Vec4> {
    prop::array::uniform4(-range..range).prop_map(Vec4::from)
}

pub fn vec6(range: f64) -> impl Strategy<Value = Vec6> {
    prop::array::uniform6(-range..range).prop_map(Vec6::from)
}

/// Rotation vector with a uniformly drawn direction and angle in `[0, max_angle]`.
pub fn rotvec(max_angle: f64) -> impl Strategy<Value = Vec3> {
    (prop::array::uniform3(-1.0..1.0f64), 0.0..max_angle).prop_filter_map("degenerate axis", |(a, angle)| {
        let axis = Vec3::from(a);
        let n = axis.norm();
        (n > 1e-3 && n <= 1.0).then(|| axis / n * angle)
    })
}

pub fn rotation(max_angle: f64) -> impl Strategy<Value = Rotation3> {
    rotvec(max_angle).prop_map(|v| so3_exp(&v))
}

pub fn pose(max_angle: f64, max_trans: f64) -> impl Strategy<Value = Pose3> {
    (rotation(max_angle), vec3(max_trans)).prop_map(|(r, t)| Pose3::new(r, t))
}

/// Random state with rotations up to `max_angle` and translations up to
/// `max_trans` per axis.
pub fn state(max_angle: f64, max_trans: f64) -> impl Strategy<Value = PoseState> {
    (
        pose(max_angle, max_trans),
        pose(max_angle, max_trans),
        pose(max_angle, max_trans),
        vec3(2.0),
        vec3(2.0),
        vec3(2.0),
    )
        .prop_map(|(p, l, r, vp, vl, vr)| PoseState {
            pelvis: p,
            left_shank: l,
            right_shank: r,
            v_pelvis: vp,
            v_ls: vl,
            v_rs: vr,
        })
}

pub fn error_vec(range: f64) -> impl Strategy<Value = ErrorVec> {
    prop::collection::vec(-range..range, 27).prop_map(|v| ErrorVec::from_vec(v))
}

pub fn state_distance(a: &PoseState, b: &PoseState) -> f64 {
    use lgpose_core::state::Segment;
    Segment::ALL
        .iter()
        .map(|&s| {
            let (pa, pb) = (a.pose(s), b.pose(s));
            (pa.trans - pb.trans)
                .norm()
                .max((pa.rot.matrix() - pb.rot.matrix()).abs().max())
                .max((a.velocity(s) - b.velocity(s)).norm())
        })
        .fold(0.0, f64::max)
}
