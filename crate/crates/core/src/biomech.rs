//! Motion, measurement and constraint models with their analytic Jacobians.
//!
//! All Jacobians are taken with respect to a right perturbation `μ exp(ε)`
//! and are laid out over the 27 error columns described in [`crate::state`].

use nalgebra::{DMatrix, DVector, RowSVector, SMatrix};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::lie::{so3_hat, so3_log, Mat3, Pose3, Rotation3, Vec3, Vec4};
use crate::state::{Cov, ErrorVec, PoseState, Segment, POSE_DIM, STATE_DIM};

pub type Row27 = RowSVector<f64, STATE_DIM>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BodyParams {
    /// Distance between the hip joint centres.
    pub d_pelvis: f64,
    pub d_lthigh: f64,
    pub d_rthigh: f64,
    /// Ankle-to-knee length.
    pub d_lshank: f64,
    pub d_rshank: f64,
    /// Nominal pelvis height while walking.
    pub z_pelvis: f64,
    /// Height of the ankle sensor above the world origin during stance.
    pub z_floor: f64,
    pub knee_rom_min: f64,
    pub knee_rom_max: f64,
}

impl Default for BodyParams {
    fn default() -> Self {
        BodyParams {
            d_pelvis: 0.2,
            d_lthigh: 0.46,
            d_rthigh: 0.46,
            d_lshank: 0.44,
            d_rshank: 0.44,
            z_pelvis: 0.9,
            z_floor: 0.08,
            knee_rom_min: 0.0,
            knee_rom_max: PI,
        }
    }
}

impl BodyParams {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("d_pelvis", self.d_pelvis),
            ("d_lthigh", self.d_lthigh),
            ("d_rthigh", self.d_rthigh),
            ("d_lshank", self.d_lshank),
            ("d_rshank", self.d_rshank),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.z_pelvis.is_finite() || !self.z_floor.is_finite() {
            return Err(Error::InvalidParams("heights must be finite".into()));
        }
        if !(self.knee_rom_min <= self.knee_rom_max) {
            return Err(Error::InvalidParams(format!(
                "knee ROM [{}, {}] is empty",
                self.knee_rom_min, self.knee_rom_max
            )));
        }
        Ok(())
    }

    pub fn thigh_length(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.d_lthigh,
            Side::Right => self.d_rthigh,
        }
    }

    pub fn shank_length(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.d_lshank,
            Side::Right => self.d_rshank,
        }
    }

    /// Hip joint centre in the pelvis frame (homogeneous).
    pub fn hip_point(&self, side: Side) -> Vec4 {
        Vec4::new(0.0, side.sign() * 0.5 * self.d_pelvis, 0.0, 1.0)
    }

    /// Knee joint centre in the shank frame (homogeneous).
    pub fn knee_point(&self, side: Side) -> Vec4 {
        Vec4::new(0.0, 0.0, self.shank_length(side), 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn shank(self) -> Segment {
        match self {
            Side::Left => Segment::LeftShank,
            Side::Right => Segment::RightShank,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

/// One sample of the three world-resolved, gravity-free IMU streams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuFrame {
    pub t: f64,
    pub acc_p: Vec3,
    pub acc_ls: Vec3,
    pub acc_rs: Vec3,
    pub rot_p: Rotation3,
    pub rot_ls: Rotation3,
    pub rot_rs: Rotation3,
    pub fc_left: bool,
    pub fc_right: bool,
}

impl ImuFrame {
    pub fn acc(&self, seg: Segment) -> &Vec3 {
        match seg {
            Segment::Pelvis => &self.acc_p,
            Segment::LeftShank => &self.acc_ls,
            Segment::RightShank => &self.acc_rs,
        }
    }

    pub fn rot(&self, seg: Segment) -> &Rotation3 {
        match seg {
            Segment::Pelvis => &self.rot_p,
            Segment::LeftShank => &self.rot_ls,
            Segment::RightShank => &self.rot_rs,
        }
    }

    pub fn contact(&self, side: Side) -> bool {
        match side {
            Side::Left => self.fc_left,
            Side::Right => self.fc_right,
        }
    }
}

/// Variances for the process and measurement noise. Defaults are the
/// published tuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    /// Acceleration variance, three entries per segment (m²/s⁴).
    pub acc_var: [f64; 9],
    /// Orientation process variance, three entries per segment.
    pub qori_var: [f64; 9],
    pub ori_var: [f64; 9],
    /// Pelvis height pseudo-measurement (m²).
    pub mp_var: f64,
    /// Stance ankle: three velocity entries then the height entry.
    pub ls_var: [f64; 4],
    pub rs_var: [f64; 4],
    /// Covariance limiter pseudo-measurement.
    pub lim_var: [f64; 18],
    /// Nominal sample period (s).
    pub dt: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            acc_var: [1e2; 9],
            qori_var: [1e3; 9],
            ori_var: [1e-2; 9],
            mp_var: 0.1,
            ls_var: [0.01, 0.01, 0.01, 1e-4],
            rs_var: [0.01, 0.01, 0.01, 1e-4],
            lim_var: [10.0; 18],
            dt: 0.01,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .acc_var
            .iter()
            .chain(&self.qori_var)
            .chain(&self.ori_var)
            .chain(std::iter::once(&self.mp_var))
            .chain(&self.ls_var)
            .chain(&self.rs_var)
            .chain(&self.lim_var);
        if let Some(v) = all.into_iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParams(format!("variances must be positive, got {v}")));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParams(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    fn contact_var(&self, side: Side) -> &[f64; 4] {
        match side {
            Side::Left => &self.ls_var,
            Side::Right => &self.rs_var,
        }
    }
}

// ---------------------------------------------------------------------------
// Motion model
// ---------------------------------------------------------------------------

/// Per-step increment `Ω`: constant orientation, constant-acceleration translation.
pub fn omega(x: &PoseState, imu: &ImuFrame, dt: f64) -> ErrorVec {
    let mut out = ErrorVec::zeros();
    for seg in Segment::ALL {
        let a = imu.acc(seg);
        let r_t = imu.rot(seg).matrix().transpose();
        let rho = r_t * (x.velocity(seg) * dt + a * (0.5 * dt * dt));
        out.fixed_rows_mut::<3>(seg.pose_offset()).copy_from(&rho);
        out.fixed_rows_mut::<3>(seg.vel_offset()).copy_from(&(a * dt));
    }
    out
}

/// `∂Ω(μ exp(ε))/∂ε`: only the velocity errors feed the translation rows.
pub fn motion_jacobian(imu: &ImuFrame, dt: f64) -> Cov {
    let mut c = Cov::zeros();
    for seg in Segment::ALL {
        let block = imu.rot(seg).matrix().transpose() * dt;
        c.fixed_view_mut::<3, 3>(seg.pose_offset(), seg.vel_offset()).copy_from(&block);
    }
    c
}

pub fn process_noise(noise: &NoiseParams, dt: f64) -> Cov {
    let mut q = Cov::zeros();
    for seg in Segment::ALL {
        let i = seg.index();
        for k in 0..3 {
            let acc = noise.acc_var[3 * i + k];
            q[(seg.pose_offset() + k, seg.pose_offset() + k)] = 0.5 * dt * dt * acc;
            q[(seg.pose_offset() + 3 + k, seg.pose_offset() + 3 + k)] = noise.qori_var[3 * i + k];
            q[(seg.vel_offset() + k, seg.vel_offset() + k)] = dt * acc;
        }
    }
    q
}

// ---------------------------------------------------------------------------
// Measurement models
// ---------------------------------------------------------------------------

/// `E T p⊙`: derivative of the world point `E T exp(ε) p` with respect to ε.
fn point_jacobian(t: &Pose3, p: &Vec4) -> SMatrix<f64, 3, 6> {
    let mut d = SMatrix::<f64, 3, 6>::zeros();
    let r = t.rot.matrix();
    d.fixed_view_mut::<3, 3>(0, 0).copy_from(&(r * p.w));
    d.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-r * so3_hat(&p.xyz())));
    d
}

const ORIGIN: Vec4 = Vec4::new(0.0, 0.0, 0.0, 1.0);

pub fn h_ori(x: &PoseState) -> [Rotation3; 3] {
    Segment::ALL.map(|s| x.pose(s).rot)
}

pub fn ori_jacobian() -> SMatrix<f64, 9, STATE_DIM> {
    let mut h = SMatrix::<f64, 9, STATE_DIM>::zeros();
    for seg in Segment::ALL {
        h.fixed_view_mut::<3, 3>(3 * seg.index(), seg.pose_offset() + 3)
            .copy_from(&Mat3::identity());
    }
    h
}

/// Pelvis height.
pub fn h_mp(x: &PoseState) -> f64 {
    x.pelvis.trans.z
}

pub fn mp_jacobian(x: &PoseState) -> Row27 {
    let mut h = Row27::zeros();
    let d = point_jacobian(&x.pelvis, &ORIGIN);
    h.fixed_columns_mut::<6>(0).copy_from(&d.row(2));
    h
}

/// Stance-ankle model: shank velocity and shank origin height.
pub fn h_fc(x: &PoseState, side: Side) -> Vec4 {
    let seg = side.shank();
    let v = x.velocity(seg);
    Vec4::new(v.x, v.y, v.z, x.pose(seg).trans.z)
}

pub fn fc_jacobian(x: &PoseState, side: Side) -> SMatrix<f64, 4, STATE_DIM> {
    let seg = side.shank();
    let mut h = SMatrix::<f64, 4, STATE_DIM>::zeros();
    h.fixed_view_mut::<3, 3>(0, seg.vel_offset()).copy_from(&Mat3::identity());
    let d = point_jacobian(x.pose(seg), &ORIGIN);
    h.fixed_view_mut::<1, 6>(3, seg.pose_offset()).copy_from(&d.row(2));
    h
}

/// Pseudo-measurement of the pose errors used by the covariance limiter.
pub fn limiter_jacobian() -> SMatrix<f64, POSE_DIM, STATE_DIM> {
    let mut h = SMatrix::<f64, POSE_DIM, STATE_DIM>::zeros();
    h.fixed_view_mut::<POSE_DIM, POSE_DIM>(0, 0).fill_with_identity();
    h
}

/// Stacked measurement Jacobian, innovation and diagonal noise for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub jacobian: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub noise_var: DVector<f64>,
}

impl Measurement {
    pub fn rows(&self) -> usize {
        self.innovation.len()
    }
}

/// Orientation, pelvis height, then one 4-row block per foot in contact.
pub fn assemble_measurement(
    x: &PoseState,
    imu: &ImuFrame,
    body: &BodyParams,
    noise: &NoiseParams,
) -> Result<Measurement> {
    let sides: Vec<Side> = Side::BOTH.into_iter().filter(|&s| imu.contact(s)).collect();
    let rows = 10 + 4 * sides.len();
    let mut jac = DMatrix::zeros(rows, STATE_DIM);
    let mut innov = DVector::zeros(rows);
    let mut var = DVector::zeros(rows);

    jac.view_mut((0, 0), (9, STATE_DIM)).copy_from(&ori_jacobian());
    for seg in Segment::ALL {
        let predicted = x.pose(seg).rot;
        let delta = so3_log(&(predicted.inverse() * *imu.rot(seg)))?;
        innov.rows_mut(3 * seg.index(), 3).copy_from(&delta);
    }
    var.rows_mut(0, 9).copy_from_slice(&noise.ori_var);

    jac.view_mut((9, 0), (1, STATE_DIM)).copy_from(&mp_jacobian(x));
    innov[9] = body.z_pelvis - h_mp(x);
    var[9] = noise.mp_var;

    for (i, side) in sides.into_iter().enumerate() {
        let r0 = 10 + 4 * i;
        jac.view_mut((r0, 0), (4, STATE_DIM)).copy_from(&fc_jacobian(x, side));
        let z = Vec4::new(0.0, 0.0, 0.0, body.z_floor);
        innov.rows_mut(r0, 4).copy_from(&(z - h_fc(x, side)));
        var.rows_mut(r0, 4).copy_from_slice(noise.contact_var(side));
    }
    Ok(Measurement {
        jacobian: jac,
        innovation: innov,
        noise_var: var,
    })
}

// ---------------------------------------------------------------------------
// Constraints
// ---------------------------------------------------------------------------

/// Hip centre minus knee centre, in world coordinates.
pub fn thigh_vector(x: &PoseState, body: &BodyParams, side: Side) -> Vec3 {
    let hip = x.pelvis.transform_homogeneous(&body.hip_point(side));
    let knee = x.pose(side.shank()).transform_homogeneous(&body.knee_point(side));
    (hip - knee).xyz()
}

fn thigh_vector_jacobian(x: &PoseState, body: &BodyParams, side: Side) -> SMatrix<f64, 3, STATE_DIM> {
    let seg = side.shank();
    let mut d = SMatrix::<f64, 3, STATE_DIM>::zeros();
    d.fixed_view_mut::<3, 6>(0, 0)
        .copy_from(&point_jacobian(&x.pelvis, &body.hip_point(side)));
    d.fixed_view_mut::<3, 6>(0, seg.pose_offset())
        .copy_from(&(-point_jacobian(x.pose(seg), &body.knee_point(side))));
    d
}

/// Thigh length residual `|τ|² - d²`.
pub fn c_ltl(x: &PoseState, body: &BodyParams, side: Side) -> f64 {
    let d = body.thigh_length(side);
    thigh_vector(x, body, side).norm_squared() - d * d
}

pub fn ltl_jacobian(x: &PoseState, body: &BodyParams, side: Side) -> Row27 {
    let tau = thigh_vector(x, body, side);
    2.0 * tau.transpose() * thigh_vector_jacobian(x, body, side)
}

/// `(R_s axis)ᵀ τ` and its Jacobian for a fixed shank-frame direction.
fn axis_residual(x: &PoseState, body: &BodyParams, side: Side, axis: &Vec3) -> (f64, Row27) {
    let seg = side.shank();
    let shank = x.pose(seg);
    let tau = thigh_vector(x, body, side);
    let world_axis = shank.rot.rotate(axis);
    let mut jac = world_axis.transpose() * thigh_vector_jacobian(x, body, side);
    let dir = Vec4::new(axis.x, axis.y, axis.z, 0.0);
    let axis_term = tau.transpose() * point_jacobian(shank, &dir);
    let mut block = jac.fixed_columns_mut::<6>(seg.pose_offset());
    block += axis_term;
    (world_axis.dot(&tau), jac)
}

/// Hinge residual: thigh vector against the shank mediolateral axis.
pub fn c_lkh(x: &PoseState, body: &BodyParams, side: Side) -> f64 {
    axis_residual(x, body, side, &Vec3::y()).0
}

pub fn lkh_jacobian(x: &PoseState, body: &BodyParams, side: Side) -> Row27 {
    axis_residual(x, body, side, &Vec3::y()).1
}

/// Shank-frame direction orthogonal to a thigh at knee angle `alpha`.
pub fn rom_axis(alpha: f64) -> Vec3 {
    let (s, c) = (alpha - FRAC_PI_2).sin_cos();
    Vec3::z() * c - Vec3::x() * s
}

/// Knee ROM residual for a target (clamped) angle.
pub fn c_lkr(x: &PoseState, body: &BodyParams, side: Side, alpha_clamped: f64) -> f64 {
    axis_residual(x, body, side, &rom_axis(alpha_clamped)).0
}

pub fn lkr_jacobian(x: &PoseState, body: &BodyParams, side: Side, alpha_clamped: f64) -> Row27 {
    axis_residual(x, body, side, &rom_axis(alpha_clamped)).1
}

/// Sagittal knee flexion: 0 for a straight leg, positive in flexion,
/// in `(-π/2, 3π/2]`.
pub fn knee_angle(x: &PoseState, body: &BodyParams, side: Side) -> Result<f64> {
    let shank = &x.pose(side.shank()).rot;
    let tau = thigh_vector(x, body, side);
    let along_z = -shank.axis(2).dot(&tau);
    let along_x = -shank.axis(0).dot(&tau);
    if along_z.hypot(along_x) < 1e-9 {
        return Err(Error::DegenerateProjection);
    }
    let alpha = along_z.atan2(along_x) + FRAC_PI_2;
    Ok(if alpha <= -FRAC_PI_2 { alpha + 2.0 * PI } else { alpha })
}

pub fn clamp_knee(alpha: f64, body: &BodyParams) -> f64 {
    alpha.max(body.knee_rom_min).min(body.knee_rom_max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    ThighLength,
    KneeHinge,
    KneeRom,
}

/// Active constraint rows with residual `-c(μ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    pub jacobian: DMatrix<f64>,
    pub residual: DVector<f64>,
    pub rows: Vec<(Side, ConstraintKind)>,
}

impl ConstraintSet {
    pub fn rom_active(&self, side: Side) -> bool {
        self.rows.contains(&(side, ConstraintKind::KneeRom))
    }
}

pub fn assemble_constraints(x: &PoseState, body: &BodyParams) -> Result<ConstraintSet> {
    let mut rows: Vec<(Side, ConstraintKind, f64, Row27)> = Vec::with_capacity(6);
    for side in Side::BOTH {
        rows.push((side, ConstraintKind::ThighLength, c_ltl(x, body, side), ltl_jacobian(x, body, side)));
        let (c, j) = axis_residual(x, body, side, &Vec3::y());
        rows.push((side, ConstraintKind::KneeHinge, c, j));
        let alpha = knee_angle(x, body, side)?;
        if alpha < body.knee_rom_min || alpha > body.knee_rom_max {
            let (c, j) = axis_residual(x, body, side, &rom_axis(clamp_knee(alpha, body)));
            rows.push((side, ConstraintKind::KneeRom, c, j));
        }
    }
    let mut jacobian = DMatrix::zeros(rows.len(), STATE_DIM);
    let mut residual = DVector::zeros(rows.len());
    for (i, (_, _, c, j)) in rows.iter().enumerate() {
        jacobian.row_mut(i).copy_from(j);
        residual[i] = -c;
    }
    Ok(ConstraintSet {
        jacobian,
        residual,
        rows: rows.into_iter().map(|(s, k, _, _)| (s, k)).collect(),
    })
}

// ---------------------------------------------------------------------------
// Post-processing
// ---------------------------------------------------------------------------

/// Thigh frame: z along the thigh vector (knee to hip), y the shank
/// mediolateral axis made orthogonal to z.
pub fn thigh_orientation(x: &PoseState, body: &BodyParams, side: Side) -> Result<Rotation3> {
    let tau = thigh_vector(x, body, side);
    let len = tau.norm();
    if len < 1e-9 {
        return Err(Error::DegenerateProjection);
    }
    let z = tau / len;
    let shank_y = x.pose(side.shank()).rot.axis(1);
    let y = shank_y - z * z.dot(&shank_y);
    let ny = y.norm();
    if ny < 1e-9 {
        return Err(Error::DegenerateProjection);
    }
    let y = y / ny;
    let x_axis = y.cross(&z);
    Ok(Rotation3::new_unchecked(Mat3::from_columns(&[x_axis, y, z])))
}

/// Hip angles `(y, x, z)` in radians: intrinsic Y-X-Z decomposition of the
/// thigh orientation relative to the pelvis.
pub fn hip_angles(pelvis: &Rotation3, thigh: &Rotation3) -> [f64; 3] {
    let r = pelvis.matrix().transpose() * thigh.matrix();
    let x = (-r[(1, 2)]).clamp(-1.0, 1.0).asin();
    let y = r[(0, 2)].atan2(r[(2, 2)]);
    let z = r[(1, 0)].atan2(r[(1, 1)]);
    [y, x, z]
}
