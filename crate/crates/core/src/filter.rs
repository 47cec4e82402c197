//! Predict, measurement-update and constraint-projection steps, and the
//! per-sequence driver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::biomech::{
    assemble_constraints, assemble_measurement, limiter_jacobian, motion_jacobian, omega, process_noise,
    BodyParams, ConstraintSet, ImuFrame, NoiseParams, Side,
};
use crate::error::{Error, Result};
use crate::state::{
    perturb, state_adjoint, state_exp, state_right_jacobian, Belief, Cov, ErrorVec, PoseState, JACOBIAN_TERMS,
    POSE_DIM, STATE_DIM,
};

/// Largest condition number accepted for the innovation and constraint Gram matrices.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterConfig {
    pub noise: NoiseParams,
    pub body: BodyParams,
    /// Initial covariance is `p0_scale * I`.
    pub p0_scale: f64,
    pub jacobian_terms: usize,
    /// Use the pose pseudo-measurement when updating the covariance.
    pub limiter: bool,
    /// Clamp negative covariance eigenvalues to zero after each update.
    pub clamp_eigenvalues: bool,
    /// Record eigenvalue diagnostics in the trace (costs an eigen-solve per phase).
    pub diagnostics: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            noise: NoiseParams::default(),
            body: BodyParams::default(),
            p0_scale: 0.5,
            jacobian_terms: JACOBIAN_TERMS,
            limiter: true,
            clamp_eigenvalues: false,
            diagnostics: false,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.body.validate()?;
        if !(self.p0_scale > 0.0 && self.p0_scale.is_finite()) {
            return Err(Error::InvalidParams(format!("p0_scale must be positive, got {}", self.p0_scale)));
        }
        if self.jacobian_terms == 0 {
            return Err(Error::InvalidParams("jacobian_terms must be at least 1".into()));
        }
        Ok(())
    }

    pub fn initial_belief(&self, mu: PoseState) -> Belief {
        Belief::with_scaled_identity(mu, self.p0_scale)
    }
}

fn to_dynamic(m: &Cov) -> DMatrix<f64> {
    DMatrix::from_column_slice(STATE_DIM, STATE_DIM, m.as_slice())
}

fn to_static(m: &DMatrix<f64>) -> Cov {
    Cov::from_column_slice(m.as_slice())
}

fn condition_number(s: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(s.clone()).eigenvalues;
    let max = eig.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `S X = B` for symmetric positive definite `S`.
fn spd_solve(s: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    s.clone().cholesky().map(|c| c.solve(b))
}

fn finish(mut b: Belief, cfg: &FilterConfig) -> Result<Belief> {
    b.symmetrize();
    if cfg.clamp_eigenvalues {
        b.clamp_eigenvalues();
    }
    b.ensure_finite()?;
    Ok(b)
}

/// Propagates the belief over one sample period with the kinematic model.
pub fn predict(b: &Belief, imu: &ImuFrame, dt: f64, cfg: &FilterConfig) -> Result<Belief> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParams(format!("time step must be positive, got {dt}")));
    }
    let step = omega(&b.mu, imu, dt);
    let jr = state_right_jacobian(&step, cfg.jacobian_terms);
    let f = state_adjoint(&state_exp(&-step)) + jr * motion_jacobian(imu, dt);
    let q = process_noise(&cfg.noise, dt);
    let cov = f * b.cov * f.transpose() + jr * q * jr.transpose();
    finish(Belief::new(perturb(&b.mu, &step), cov), cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateInfo {
    pub rows: usize,
    pub innovation_norm: f64,
    pub correction: ErrorVec,
}

/// Fuses orientation, pelvis height and stance-foot measurements.
pub fn measurement_update(b: &Belief, imu: &ImuFrame, cfg: &FilterConfig) -> Result<(Belief, UpdateInfo)> {
    let m = assemble_measurement(&b.mu, imu, &cfg.body, &cfg.noise)?;
    let p = to_dynamic(&b.cov);
    let h = &m.jacobian;
    let ph_t = &p * h.transpose();
    let s = h * &ph_t + DMatrix::from_diagonal(&m.noise_var);
    let condition = condition_number(&s);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularInnovation { condition });
    }
    let gain_t = spd_solve(&s, &ph_t.transpose()).ok_or(Error::SingularInnovation { condition })?;
    let gain = gain_t.transpose();
    let nu_dyn = &gain * &m.innovation;
    let nu = ErrorVec::from_column_slice(nu_dyn.as_slice());
    let mu = perturb(&b.mu, &nu);

    let reduced = if cfg.limiter {
        let rows = m.rows() + POSE_DIM;
        let mut h_aug = DMatrix::zeros(rows, STATE_DIM);
        h_aug.rows_mut(0, m.rows()).copy_from(h);
        h_aug
            .rows_mut(m.rows(), POSE_DIM)
            .copy_from(&DMatrix::from_column_slice(POSE_DIM, STATE_DIM, limiter_jacobian().as_slice()));
        let mut r_aug = DVector::zeros(rows);
        r_aug.rows_mut(0, m.rows()).copy_from(&m.noise_var);
        r_aug.rows_mut(m.rows(), POSE_DIM).copy_from_slice(&cfg.noise.lim_var);
        let ph_aug = &p * h_aug.transpose();
        let s_aug = &h_aug * &ph_aug + DMatrix::from_diagonal(&r_aug);
        let k_aug = spd_solve(&s_aug, &ph_aug.transpose())
            .ok_or(Error::SingularInnovation {
                condition: condition_number(&s_aug),
            })?
            .transpose();
        &p - k_aug * (&h_aug * &p)
    } else {
        &p - &gain * (h * &p)
    };
    let jr = state_right_jacobian(&nu, cfg.jacobian_terms);
    let cov = jr * to_static(&reduced) * jr.transpose();
    let info = UpdateInfo {
        rows: m.rows(),
        innovation_norm: m.innovation.norm(),
        correction: nu,
    };
    Ok((finish(Belief::new(mu, cov), cfg)?, info))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintInfo {
    pub constraints: ConstraintSet,
    pub correction: ErrorVec,
    /// Whether the Gram matrix needed diagonal jitter.
    pub regularized: bool,
}

/// One projection of the mean onto the linearized constraint manifold. The
/// covariance is left unchanged.
pub fn constraint_update(b: &Belief, cfg: &FilterConfig) -> Result<(Belief, ConstraintInfo)> {
    let cs = assemble_constraints(&b.mu, &cfg.body)?;
    let p = to_dynamic(&b.cov);
    let pc_t = &p * cs.jacobian.transpose();
    let mut gram = &cs.jacobian * &pc_t;
    let mut regularized = false;
    let mut condition = condition_number(&gram);
    if !(condition <= MAX_CONDITION) {
        let jitter = 1e-12 * gram.trace();
        for i in 0..gram.nrows() {
            gram[(i, i)] += jitter;
        }
        regularized = true;
        condition = condition_number(&gram);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularConstraintGram { condition });
        }
    }
    let weights = spd_solve(&gram, &DMatrix::from_column_slice(cs.residual.len(), 1, cs.residual.as_slice()))
        .ok_or(Error::SingularConstraintGram { condition })?;
    let nu_dyn = &pc_t * weights;
    let nu = ErrorVec::from_column_slice(nu_dyn.as_slice());
    let out = Belief::new(perturb(&b.mu, &nu), b.cov);
    out.ensure_finite()?;
    Ok((
        out,
        ConstraintInfo {
            constraints: cs,
            correction: nu,
            regularized,
        },
    ))
}

/// Per-frame diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub t: f64,
    /// `None` on the first frame, which is not predicted.
    pub predicted: Option<PoseState>,
    pub updated: PoseState,
    pub constrained: PoseState,
    pub cov_trace: f64,
    /// Trace over the nine translation error coordinates.
    pub position_trace: f64,
    pub asymmetry: f64,
    /// Smallest eigenvalue over the predicted and updated covariances;
    /// `None` unless diagnostics are enabled.
    pub min_eigenvalue: Option<f64>,
    pub innovation_norm: f64,
    pub measurement_rows: usize,
    pub constraint_rows: usize,
    pub rom_active: [bool; 2],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterTrace {
    pub frames: Vec<FrameRecord>,
}

/// Translation error indices of the three poses.
pub const POSITION_INDICES: [usize; 9] = [0, 1, 2, 6, 7, 8, 12, 13, 14];

fn position_trace(cov: &Cov) -> f64 {
    POSITION_INDICES.iter().map(|&i| cov[(i, i)]).sum()
}

/// Runs predict, update and projection over a whole sequence. The first frame
/// is fused into `init` without a prediction; every later frame is predicted
/// with the previous frame's inputs.
pub fn run_filter(frames: &[ImuFrame], init: Belief, cfg: &FilterConfig) -> Result<(Vec<PoseState>, FilterTrace)> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidParams("no input frames".into()));
    }
    let mut belief = init;
    let mut out = Vec::with_capacity(frames.len());
    let mut trace = FilterTrace {
        frames: Vec::with_capacity(frames.len()),
    };
    for (k, frame) in frames.iter().enumerate() {
        step(k, frames, &mut belief, &mut out, &mut trace, cfg).map_err(|e| e.at_frame(k))?;
        debug_assert_eq!(frame.t, trace.frames[k].t);
    }
    Ok((out, trace))
}

fn step(
    k: usize,
    frames: &[ImuFrame],
    belief: &mut Belief,
    out: &mut Vec<PoseState>,
    trace: &mut FilterTrace,
    cfg: &FilterConfig,
) -> Result<()> {
    let frame = &frames[k];
    let mut min_eig = f64::INFINITY;
    let predicted = if k > 0 {
        let prev = &frames[k - 1];
        let dt = frame.t - prev.t;
        if !(dt > 0.0) {
            return Err(Error::InvalidParams(format!("timestamps must increase (dt = {dt})")));
        }
        *belief = predict(belief, prev, dt, cfg)?;
        if cfg.diagnostics {
            min_eig = min_eig.min(belief.min_eigenvalue());
        }
        Some(belief.mu)
    } else {
        None
    };
    let (updated, info) = measurement_update(belief, frame, cfg)?;
    if cfg.diagnostics {
        min_eig = min_eig.min(updated.min_eigenvalue());
    }
    let (constrained, cinfo) = constraint_update(&updated, cfg)?;
    trace.frames.push(FrameRecord {
        t: frame.t,
        predicted,
        updated: updated.mu,
        constrained: constrained.mu,
        cov_trace: constrained.cov.trace(),
        position_trace: position_trace(&constrained.cov),
        asymmetry: constrained.asymmetry(),
        min_eigenvalue: cfg.diagnostics.then_some(min_eig),
        innovation_norm: info.innovation_norm,
        measurement_rows: info.rows,
        constraint_rows: cinfo.constraints.rows.len(),
        rom_active: Side::BOTH.map(|s| cinfo.constraints.rom_active(s)),
    });
    out.push(constrained.mu);
    *belief = constrained;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biomech::{c_ltl, h_mp};
    use crate::lie::{Rotation3, Vec3};
    use crate::state::Segment;

    fn body() -> BodyParams {
        BodyParams::default()
    }

    fn standing() -> PoseState {
        let b = body();
        let mut x = PoseState::identity();
        x.pelvis.trans = Vec3::new(0.0, 0.0, b.z_pelvis);
        x.left_shank.trans = Vec3::new(0.0, 0.1, b.z_pelvis - 0.9);
        x.right_shank.trans = Vec3::new(0.0, -0.1, b.z_pelvis - 0.9);
        x
    }

    fn frame_for(x: &PoseState) -> ImuFrame {
        ImuFrame {
            t: 0.0,
            acc_p: Vec3::zeros(),
            acc_ls: Vec3::zeros(),
            acc_rs: Vec3::zeros(),
            rot_p: x.pelvis.rot,
            rot_ls: x.left_shank.rot,
            rot_rs: x.right_shank.rot,
            fc_left: false,
            fc_right: false,
        }
    }

    #[test]
    fn predict_at_rest_only_grows_covariance() {
        let cfg = FilterConfig::default();
        let x = standing();
        let b = cfg.initial_belief(x);
        let out = predict(&b, &frame_for(&x), 0.01, &cfg).unwrap();
        assert_eq!(out.mu, x);
        // With no motion the adjoint term is the identity; only the velocity
        // coupling and the process noise remain.
        let f = Cov::identity() + motion_jacobian(&frame_for(&x), 0.01);
        let q = process_noise(&cfg.noise, 0.01);
        assert!((out.cov - (f * b.cov * f.transpose() + q)).abs().max() < 1e-12);
    }

    #[test]
    fn predict_constant_velocity() {
        let cfg = FilterConfig::default();
        let mut x = PoseState::identity();
        x.v_pelvis = Vec3::new(1.0, 0.0, 0.0);
        let out = predict(&cfg.initial_belief(x), &frame_for(&x), 0.01, &cfg).unwrap();
        assert!((out.mu.pelvis.trans - Vec3::new(0.01, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn predict_rejects_bad_dt() {
        let cfg = FilterConfig::default();
        let x = standing();
        assert!(predict(&cfg.initial_belief(x), &frame_for(&x), 0.0, &cfg).is_err());
    }

    #[test]
    fn perfect_measurement_leaves_mean() {
        let cfg = FilterConfig::default();
        let x = standing();
        let (out, info) = measurement_update(&cfg.initial_belief(x), &frame_for(&x), &cfg).unwrap();
        assert_eq!(info.innovation_norm, 0.0);
        assert_eq!(out.mu, x);
    }

    #[test]
    fn huge_measurement_noise_freezes_mean() {
        let mut cfg = FilterConfig::default();
        cfg.noise.ori_var = [1e12; 9];
        cfg.noise.mp_var = 1e12;
        let x = standing();
        let mut frame = frame_for(&x);
        frame.rot_p = Rotation3::exp(&Vec3::new(0.0, 0.0, 0.2));
        frame.rot_ls = Rotation3::exp(&Vec3::new(0.1, 0.0, 0.0));
        let mut b = cfg.initial_belief(x);
        b.mu.pelvis.trans.z += 0.05;
        let (out, _) = measurement_update(&b, &frame, &cfg).unwrap();
        let moved = (out.mu.pelvis.trans - b.mu.pelvis.trans).norm()
            + (out.mu.pelvis.rot.matrix() - b.mu.pelvis.rot.matrix()).abs().max();
        assert!(moved < 1e-6);
    }

    #[test]
    fn constraint_update_on_satisfied_state_is_noop() {
        let cfg = FilterConfig::default();
        let x = standing();
        let (out, info) = constraint_update(&cfg.initial_belief(x), &cfg).unwrap();
        assert!(info.correction.abs().max() < 1e-12);
        assert!((out.mu.pelvis.trans - x.pelvis.trans).norm() < 1e-12);
    }

    #[test]
    fn constraint_update_shrinks_thigh_error() {
        let cfg = FilterConfig::default();
        let mut x = standing();
        x.pelvis.trans.z += 0.005;
        let before = c_ltl(&x, &cfg.body, Side::Left).abs();
        let (out, _) = constraint_update(&cfg.initial_belief(x), &cfg).unwrap();
        let after = c_ltl(&out.mu, &cfg.body, Side::Left).abs();
        assert!(after <= 0.1 * before, "{before} -> {after}");
    }

    #[test]
    fn run_filter_reports_frame_of_failure() {
        let cfg = FilterConfig::default();
        let x = standing();
        let mut frames = vec![frame_for(&x); 3];
        frames[1].t = 0.01;
        frames[2].t = 0.01;
        let err = run_filter(&frames, cfg.initial_belief(x), &cfg).unwrap_err();
        assert!(matches!(err, Error::AtFrame { index: 2, .. }));
        assert!(matches!(err.root(), Error::InvalidParams(_)));
        assert!(run_filter(&[], cfg.initial_belief(x), &cfg).is_err());
    }

    #[test]
    fn standing_still_stays_put() {
        let cfg = FilterConfig {
            diagnostics: true,
            ..FilterConfig::default()
        };
        let mut x = standing();
        x.left_shank.trans.z = cfg.body.z_floor;
        x.right_shank.trans.z = cfg.body.z_floor;
        x.pelvis.trans.z = cfg.body.z_floor + 0.9;
        let cfg = FilterConfig {
            body: BodyParams {
                z_pelvis: x.pelvis.trans.z,
                ..cfg.body
            },
            ..cfg
        };
        let frames: Vec<ImuFrame> = (0..50)
            .map(|k| ImuFrame {
                t: 0.01 * k as f64,
                fc_left: true,
                fc_right: true,
                ..frame_for(&x)
            })
            .collect();
        let (traj, trace) = run_filter(&frames, cfg.initial_belief(x), &cfg).unwrap();
        assert_eq!(traj.len(), 50);
        assert_eq!(trace.frames.len(), 50);
        assert!(trace.frames[0].predicted.is_none());
        for s in &traj {
            assert!((h_mp(s) - x.pelvis.trans.z).abs() < 1e-12);
            for seg in Segment::ALL {
                assert!((s.pose(seg).trans - x.pose(seg).trans).norm() < 1e-12);
            }
        }
        assert!(trace.frames.iter().all(|f| f.min_eigenvalue.unwrap() > 0.0));
    }
}
