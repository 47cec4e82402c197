//! Synthetic gait ground truth and sensor corruption.
//!
//! Segment origins follow piecewise-constant accelerations, so the stored
//! accelerations propagate the stored positions and velocities exactly:
//! `p[k+1] = p[k] + dt v[k] + dt²/2 a[k]` and `v[k+1] = v[k] + dt a[k]`.
//! Ankle paths are built first, then each leg is solved by two-link inverse
//! kinematics with the knee as a hinge, which makes the thigh-length and
//! hinge constraints hold by construction.
//!
//! Random numbers come from ChaCha8 keyed by `(seed, stream = channel)` with
//! the word position set from the frame index, so every draw is addressable
//! without generating the ones before it. Normals use Box–Muller on two
//! consecutive 64-bit outputs.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::biomech::{knee_angle, thigh_orientation, BodyParams, ImuFrame, NoiseParams, Side};
use crate::error::{Error, Result};
use crate::lie::{Mat3, Pose3, Rotation3, Vec3};
use crate::state::{PoseState, Segment};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    #[default]
    Straight,
    FigureEight,
    TurnInPlace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitParams {
    /// Distance covered per stride (two steps).
    pub stride_length: f64,
    /// Steps per second. Zero means standing still.
    pub cadence: f64,
    pub step_height: f64,
    pub duration: f64,
    pub sample_rate: f64,
    pub path: PathKind,
    pub body: BodyParams,
    pub seed: u64,
    /// Standard deviation of the horizontal foothold jitter (m).
    pub foot_jitter: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        GaitParams {
            stride_length: 1.0,
            cadence: 1.8,
            step_height: 0.1,
            duration: 10.0,
            sample_rate: 100.0,
            path: PathKind::Straight,
            body: BodyParams::default(),
            seed: 0,
            foot_jitter: 0.005,
        }
    }
}

impl GaitParams {
    pub fn validate(&self) -> Result<()> {
        self.body.validate()?;
        let positive = [("duration", self.duration), ("sample_rate", self.sample_rate)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("stride_length", self.stride_length),
            ("cadence", self.cadence),
            ("step_height", self.step_height),
            ("foot_jitter", self.foot_jitter),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.frame_count() == 0 {
            return Err(Error::InvalidParams("duration is shorter than one sample".into()));
        }
        if self.cadence > 0.0 && self.steps_frames() < 3 {
            return Err(Error::InfeasibleGait(format!(
                "cadence {} is too high for a {} Hz sample rate",
                self.cadence, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Walking speed implied by stride length and cadence.
    pub fn speed(&self) -> f64 {
        0.5 * self.stride_length * self.cadence
    }

    fn steps_frames(&self) -> usize {
        (self.sample_rate / self.cadence).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub params: GaitParams,
    pub t: Vec<f64>,
    pub states: Vec<PoseState>,
    /// World-frame accelerations of the pelvis, left and right shank origins,
    /// held over `[t[k], t[k+1])`.
    pub acc: Vec<[Vec3; 3]>,
    /// Foot contact `[left, right]`.
    pub contact: Vec<[bool; 2]>,
    /// Thigh poses `[left, right]` with the origin at the knee centre.
    pub thighs: Vec<[Pose3; 2]>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Noise-free sensor frames.
    pub fn imu_frames(&self) -> Vec<ImuFrame> {
        (0..self.len())
            .map(|k| {
                let x = &self.states[k];
                ImuFrame {
                    t: self.t[k],
                    acc_p: self.acc[k][0],
                    acc_ls: self.acc[k][1],
                    acc_rs: self.acc[k][2],
                    rot_p: x.pelvis.rot,
                    rot_ls: x.left_shank.rot,
                    rot_rs: x.right_shank.rot,
                    fc_left: self.contact[k][0],
                    fc_right: self.contact[k][1],
                }
            })
            .collect()
    }

    /// Moves the whole world by `offset`.
    pub fn translated(&self, offset: &Vec3) -> GroundTruth {
        let mut out = self.clone();
        for x in &mut out.states {
            *x = x.translated(offset);
        }
        for pair in &mut out.thighs {
            for th in pair.iter_mut() {
                th.trans += offset;
            }
        }
        out
    }
}

/// Addressable Gaussian noise source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        NoiseStream { seed }
    }

    /// Standard normal draw for `(index, channel)`.
    pub fn normal(&self, index: u64, channel: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(channel);
        rng.set_word_pos(u128::from(index) * 4);
        let u1 = unit_open(rng.next_u64());
        let u2 = unit_open(rng.next_u64());
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }
}

/// Maps 64 random bits to `(0, 1]`.
fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

const JITTER_CHANNEL: u64 = 1000;
const FIGURE_EIGHT_RADIUS: f64 = 2.0;
const TURN_RATE: f64 = 0.6;
/// Swing lasts this fraction of the stride period.
const SWING_FRACTION: f64 = 0.4;

#[derive(Clone, Copy, Debug)]
struct PelvisPath {
    kind: PathKind,
    speed: f64,
    height: f64,
    moving: bool,
}

impl PelvisPath {
    fn new(params: &GaitParams) -> Self {
        PelvisPath {
            kind: params.path,
            speed: params.speed(),
            height: params.body.z_pelvis,
            moving: params.cadence > 0.0,
        }
    }

    /// Position, velocity, acceleration and yaw at time `t`.
    fn eval(&self, t: f64) -> (Vec3, Vec3, Vec3, f64) {
        let z = Vec3::new(0.0, 0.0, self.height);
        if !self.moving {
            return (z, Vec3::zeros(), Vec3::zeros(), 0.0);
        }
        match self.kind {
            PathKind::Straight => (
                z + Vec3::new(self.speed * t, 0.0, 0.0),
                Vec3::new(self.speed, 0.0, 0.0),
                Vec3::zeros(),
                0.0,
            ),
            PathKind::TurnInPlace => (z, Vec3::zeros(), Vec3::zeros(), TURN_RATE * t),
            PathKind::FigureEight => {
                // Two tangent circles through the origin at constant speed:
                // counter-clockwise around +y first, then clockwise around -y.
                let r = FIGURE_EIGHT_RADIUS;
                let lap = TAU * r;
                let s = (self.speed * t).rem_euclid(2.0 * lap);
                let (turn, theta) = if s < lap { (1.0, s / r) } else { (-1.0, (s - lap) / r) };
                let (sin, cos) = theta.sin_cos();
                let p = Vec3::new(r * sin, turn * r * (1.0 - cos), 0.0);
                let v = Vec3::new(cos, turn * sin, 0.0) * self.speed;
                let a = Vec3::new(-sin, turn * cos, 0.0) * (self.speed * self.speed / r);
                (z + p, v, a, turn * theta)
            }
        }
    }

    fn hip(&self, t: f64, body: &BodyParams, side: Side) -> Vec3 {
        let (p, _, _, yaw) = self.eval(t);
        Pose3::new(Rotation3::about_z(yaw), p).transform_point(&body.hip_point(side).xyz())
    }
}

struct Schedule {
    period: i64,
    swing: i64,
    offsets: [i64; 2],
}

/// Per-frame ankle position, velocity, acceleration and contact.
type FootTrack = Vec<(Vec3, Vec3, Vec3, bool)>;

fn foot_track(
    params: &GaitParams,
    path: &PelvisPath,
    sched: &Schedule,
    side: Side,
    noise: &NoiseStream,
) -> FootTrack {
    let n = params.frame_count() as i64;
    let dt = params.dt();
    let body = &params.body;
    let side_idx = match side {
        Side::Left => 0,
        Side::Right => 1,
    };
    let offset = sched.offsets[side_idx];
    let (period, swing) = (sched.period, sched.swing);

    let foothold = |j: i64| -> Vec3 {
        let mid = (offset + j * period) as f64 - 0.5 * (period - swing) as f64;
        let hip = path.hip(mid * dt, body, side);
        let key = j as u64;
        let jitter = Vec3::new(
            noise.normal(key, JITTER_CHANNEL + 2 * side_idx as u64),
            noise.normal(key, JITTER_CHANNEL + 2 * side_idx as u64 + 1),
            0.0,
        ) * params.foot_jitter;
        Vec3::new(hip.x, hip.y, body.z_floor) + jitter
    };

    // Unit-amplitude swing profiles; the horizontal one starts and ends at
    // rest and its displacement is `horizontal_gain` per unit coefficient.
    let phase = |i: i64| TAU * (i as f64 + 0.5) / swing as f64;
    let horizontal_gain: f64 = -(0..swing).map(|i| (i as f64 + 0.5) * phase(i).sin()).sum::<f64>() * dt * dt;
    let vertical_gain = {
        let (mut z, mut v, mut peak) = (0.0_f64, 0.0_f64, 0.0_f64);
        for i in 0..swing {
            let a = phase(i).cos();
            z += dt * v + 0.5 * dt * dt * a;
            v += dt * a;
            peak = peak.max(z);
        }
        if peak > 0.0 {
            params.step_height / peak
        } else {
            0.0
        }
    };

    let first = (-offset).div_euclid(period) - 1;
    let mut k = offset + first * period;
    let mut pos = foothold(first);
    let mut vel = Vec3::zeros();
    let mut out = Vec::with_capacity(n as usize);
    let mut target = foothold(first + 1);
    while k < n {
        let i = (k - offset).rem_euclid(period);
        let j = (k - offset).div_euclid(period);
        let acc = if i == 0 {
            pos = foothold(j);
            target = foothold(j + 1);
            vel = Vec3::zeros();
            swing_acc(&pos, &target, horizontal_gain, vertical_gain, phase(0))
        } else if i < swing {
            let start = foothold(j);
            swing_acc(&start, &target, horizontal_gain, vertical_gain, phase(i))
        } else {
            if i == swing {
                pos = target;
                vel = Vec3::zeros();
            }
            Vec3::zeros()
        };
        if k >= 0 {
            out.push((pos, vel, acc, i == 0 || i >= swing));
        }
        pos += vel * dt + acc * (0.5 * dt * dt);
        vel += acc * dt;
        k += 1;
    }
    out
}

fn swing_acc(start: &Vec3, target: &Vec3, h_gain: f64, v_gain: f64, phase: f64) -> Vec3 {
    let delta = target - start;
    let horizontal = Vec3::new(delta.x, delta.y, 0.0);
    let h = if h_gain > 0.0 { horizontal / h_gain } else { Vec3::zeros() };
    h * phase.sin() + Vec3::new(0.0, 0.0, v_gain * phase.cos())
}

/// Shank pose from ankle and hip positions, with the knee pushed forward in
/// the plane normal to the pelvis lateral axis.
fn solve_leg(ankle: &Vec3, hip: &Vec3, pelvis_y: &Vec3, body: &BodyParams, side: Side) -> Result<Pose3> {
    let (dt, ds) = (body.thigh_length(side), body.shank_length(side));
    let d = hip - ankle;
    let len = d.norm();
    if len >= dt + ds - 1e-9 || len <= (dt - ds).abs() + 1e-9 {
        return Err(Error::InfeasibleGait(format!(
            "hip-ankle distance {len:.4} m is out of reach for a {dt:.3} m thigh and {ds:.3} m shank"
        )));
    }
    let u = d / len;
    let n = pelvis_y - u * u.dot(pelvis_y);
    let n_norm = n.norm();
    if n_norm < 1e-9 {
        return Err(Error::InfeasibleGait("leg is aligned with the pelvis lateral axis".into()));
    }
    let n = n / n_norm;
    let f = n.cross(&u);
    let cos_b = (ds * ds + len * len - dt * dt) / (2.0 * ds * len);
    let sin_b = (1.0 - cos_b * cos_b).max(0.0).sqrt();
    let z = u * cos_b + f * sin_b;
    let x = n.cross(&z);
    Ok(Pose3::new(Rotation3::new_unchecked(Mat3::from_columns(&[x, n, z])), *ankle))
}

/// Builds a ground-truth walking sequence.
pub fn generate(params: &GaitParams) -> Result<GroundTruth> {
    params.validate()?;
    let n = params.frame_count();
    let dt = params.dt();
    let body = params.body;
    let path = PelvisPath::new(params);
    let noise = NoiseStream::new(params.seed);

    // Pelvis: integrate the midpoint acceleration of the analytic path.
    let (mut p, mut v, _, _) = path.eval(0.0);
    let mut pelvis = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let (_, _, a, _) = path.eval(t + 0.5 * dt);
        let yaw = match (path.moving, params.path) {
            (true, PathKind::FigureEight) => v.y.atan2(v.x),
            _ => path.eval(t).3,
        };
        pelvis.push((p, v, a, yaw));
        p += v * dt + a * (0.5 * dt * dt);
        v += a * dt;
    }

    let feet: [FootTrack; 2] = if path.moving {
        let step = params.steps_frames() as i64;
        let period = 2 * step;
        let sched = Schedule {
            period,
            swing: ((SWING_FRACTION * period as f64).round() as i64).clamp(2, period - 1),
            offsets: [0, step],
        };
        Side::BOTH.map(|s| foot_track(params, &path, &sched, s, &noise))
    } else {
        Side::BOTH.map(|s| {
            let hip = path.hip(0.0, &body, s);
            vec![(Vec3::new(hip.x, hip.y, body.z_floor), Vec3::zeros(), Vec3::zeros(), true); n]
        })
    };

    let mut truth = GroundTruth {
        params: *params,
        t: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
        acc: Vec::with_capacity(n),
        contact: Vec::with_capacity(n),
        thighs: Vec::with_capacity(n),
    };
    for k in 0..n {
        let (pp, pv, pa, yaw) = pelvis[k];
        let pelvis_pose = Pose3::new(Rotation3::about_z(yaw), pp);
        let mut x = PoseState {
            pelvis: pelvis_pose,
            v_pelvis: pv,
            ..PoseState::identity()
        };
        let mut acc = [pa, Vec3::zeros(), Vec3::zeros()];
        let mut contact = [false; 2];
        for (i, side) in Side::BOTH.into_iter().enumerate() {
            let (fp, fv, fa, fc) = feet[i][k];
            let hip = pelvis_pose.transform_point(&body.hip_point(side).xyz());
            let shank = solve_leg(&fp, &hip, &pelvis_pose.rot.axis(1), &body, side)
                .map_err(|e| e.at_frame(k))?;
            *x.pose_mut(side.shank()) = shank;
            *x.velocity_mut(side.shank()) = fv;
            acc[side.shank().index()] = fa;
            contact[i] = fc;
        }
        let mut thighs = [Pose3::identity(); 2];
        for (i, side) in Side::BOTH.into_iter().enumerate() {
            let alpha = knee_angle(&x, &body, side).map_err(|e| e.at_frame(k))?;
            if alpha < body.knee_rom_min || alpha > body.knee_rom_max {
                return Err(Error::InfeasibleGait(format!(
                    "knee angle {:.2} deg leaves the allowed range",
                    alpha.to_degrees()
                ))
                .at_frame(k));
            }
            let knee = x.pose(side.shank()).transform_homogeneous(&body.knee_point(side)).xyz();
            thighs[i] = Pose3::new(thigh_orientation(&x, &body, side).map_err(|e| e.at_frame(k))?, knee);
        }
        truth.t.push(k as f64 * dt);
        truth.states.push(x);
        truth.acc.push(acc);
        truth.contact.push(contact);
        truth.thighs.push(thighs);
    }
    debug_assert!(truth.states.iter().all(|s| s.pose(Segment::Pelvis).trans.z == body.z_pelvis));
    Ok(truth)
}

/// Sensor noise levels used when corrupting ground truth. Independent of the
/// filter tuning in [`NoiseParams`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoise {
    /// Per-axis acceleration variance, three entries per segment (m²/s⁴).
    pub acc_var: [f64; 9],
    /// Per-axis orientation variance, three entries per segment (rad²).
    pub ori_var: [f64; 9],
}

impl Default for SensorNoise {
    fn default() -> Self {
        SensorNoise {
            acc_var: [0.1 * 0.1; 9],
            ori_var: [0.02 * 0.02; 9],
        }
    }
}

impl SensorNoise {
    pub fn zero() -> Self {
        SensorNoise {
            acc_var: [0.0; 9],
            ori_var: [0.0; 9],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.acc_var.iter().chain(&self.ori_var).find(|v| !(**v >= 0.0 && v.is_finite())) {
            Some(v) => Err(Error::InvalidParams(format!("sensor variances must be non-negative, got {v}"))),
            None => Ok(()),
        }
    }
}

impl From<&NoiseParams> for SensorNoise {
    fn from(n: &NoiseParams) -> Self {
        SensorNoise {
            acc_var: n.acc_var,
            ori_var: n.ori_var,
        }
    }
}

/// Acceleration channels are `0..9`, orientation channels `9..18`, ordered
/// pelvis, left shank, right shank and x, y, z within each segment.
pub fn corrupt(truth: &GroundTruth, noise: &SensorNoise, seed: u64) -> Vec<ImuFrame> {
    let stream = NoiseStream::new(seed);
    let mut frames = truth.imu_frames();
    for (k, f) in frames.iter_mut().enumerate() {
        let draw = |channel: usize, var: f64| var.sqrt() * stream.normal(k as u64, channel as u64);
        for seg in Segment::ALL {
            let i = seg.index();
            let da = Vec3::from_fn(|a, _| draw(3 * i + a, noise.acc_var[3 * i + a]));
            let eta = Vec3::from_fn(|a, _| draw(9 + 3 * i + a, noise.ori_var[3 * i + a]));
            let (acc, rot) = match seg {
                Segment::Pelvis => (&mut f.acc_p, &mut f.rot_p),
                Segment::LeftShank => (&mut f.acc_ls, &mut f.rot_ls),
                Segment::RightShank => (&mut f.acc_rs, &mut f.rot_rs),
            };
            *acc += da;
            if eta != Vec3::zeros() {
                *rot = *rot * Rotation3::exp(&eta);
            }
        }
    }
    frames
}

/// Angle of a rotation relative to the identity, in `[0, π]`.
pub fn rotation_error(a: &Rotation3, b: &Rotation3) -> f64 {
    (a.inverse() * *b).angle()
}
