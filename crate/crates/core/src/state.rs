//! The filter state: three SE(3) segment poses and three world-frame velocities.
//!
//! Errors are 27-vectors laid out as
//! `(ρ_p, φ_p, ρ_ls, φ_ls, ρ_rs, φ_rs, v_p, v_ls, v_rs)`.

use nalgebra::{SMatrix, SVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::lie::{
    se3_adjoint, se3_exp, se3_log, se3_right_jacobian, se3_small_adjoint, Mat3, Mat6, Pose3, Vec3, Vec6,
};

pub const STATE_DIM: usize = 27;
/// Number of error coordinates covering the three poses.
pub const POSE_DIM: usize = 18;

pub type ErrorVec = SVector<f64, STATE_DIM>;
pub type Cov = SMatrix<f64, STATE_DIM, STATE_DIM>;

/// Default truncation of the right-Jacobian series.
pub const JACOBIAN_TERMS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Segment {
    Pelvis,
    LeftShank,
    RightShank,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Pelvis, Segment::LeftShank, Segment::RightShank];

    pub fn index(self) -> usize {
        match self {
            Segment::Pelvis => 0,
            Segment::LeftShank => 1,
            Segment::RightShank => 2,
        }
    }

    /// First column of this segment's twist block.
    pub fn pose_offset(self) -> usize {
        6 * self.index()
    }

    /// First column of this segment's velocity block.
    pub fn vel_offset(self) -> usize {
        POSE_DIM + 3 * self.index()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseState {
    pub pelvis: Pose3,
    pub left_shank: Pose3,
    pub right_shank: Pose3,
    pub v_pelvis: Vec3,
    pub v_ls: Vec3,
    pub v_rs: Vec3,
}

impl Default for PoseState {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseState {
    pub fn identity() -> Self {
        PoseState {
            pelvis: Pose3::identity(),
            left_shank: Pose3::identity(),
            right_shank: Pose3::identity(),
            v_pelvis: Vec3::zeros(),
            v_ls: Vec3::zeros(),
            v_rs: Vec3::zeros(),
        }
    }

    pub fn pose(&self, seg: Segment) -> &Pose3 {
        match seg {
            Segment::Pelvis => &self.pelvis,
            Segment::LeftShank => &self.left_shank,
            Segment::RightShank => &self.right_shank,
        }
    }

    pub fn pose_mut(&mut self, seg: Segment) -> &mut Pose3 {
        match seg {
            Segment::Pelvis => &mut self.pelvis,
            Segment::LeftShank => &mut self.left_shank,
            Segment::RightShank => &mut self.right_shank,
        }
    }

    pub fn velocity(&self, seg: Segment) -> &Vec3 {
        match seg {
            Segment::Pelvis => &self.v_pelvis,
            Segment::LeftShank => &self.v_ls,
            Segment::RightShank => &self.v_rs,
        }
    }

    pub fn velocity_mut(&mut self, seg: Segment) -> &mut Vec3 {
        match seg {
            Segment::Pelvis => &mut self.v_pelvis,
            Segment::LeftShank => &mut self.v_ls,
            Segment::RightShank => &mut self.v_rs,
        }
    }

    /// Group product: poses multiply, velocities add.
    pub fn compose(&self, rhs: &PoseState) -> PoseState {
        PoseState {
            pelvis: self.pelvis * rhs.pelvis,
            left_shank: self.left_shank * rhs.left_shank,
            right_shank: self.right_shank * rhs.right_shank,
            v_pelvis: self.v_pelvis + rhs.v_pelvis,
            v_ls: self.v_ls + rhs.v_ls,
            v_rs: self.v_rs + rhs.v_rs,
        }
    }

    pub fn inverse(&self) -> PoseState {
        PoseState {
            pelvis: self.pelvis.inverse(),
            left_shank: self.left_shank.inverse(),
            right_shank: self.right_shank.inverse(),
            v_pelvis: -self.v_pelvis,
            v_ls: -self.v_ls,
            v_rs: -self.v_rs,
        }
    }

    /// Shifts every segment origin by `offset` in the world frame.
    pub fn translated(&self, offset: &Vec3) -> PoseState {
        let mut out = *self;
        for seg in Segment::ALL {
            out.pose_mut(seg).trans += offset;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        Segment::ALL.iter().all(|&s| {
            let p = self.pose(s);
            p.rot.matrix().iter().all(|x| x.is_finite())
                && p.trans.iter().all(|x| x.is_finite())
                && self.velocity(s).iter().all(|x| x.is_finite())
        })
    }
}

fn twist(e: &ErrorVec, seg: Segment) -> Vec6 {
    e.fixed_rows::<6>(seg.pose_offset()).into_owned()
}

pub fn state_exp(e: &ErrorVec) -> PoseState {
    PoseState {
        pelvis: se3_exp(&twist(e, Segment::Pelvis)),
        left_shank: se3_exp(&twist(e, Segment::LeftShank)),
        right_shank: se3_exp(&twist(e, Segment::RightShank)),
        v_pelvis: e.fixed_rows::<3>(Segment::Pelvis.vel_offset()).into_owned(),
        v_ls: e.fixed_rows::<3>(Segment::LeftShank.vel_offset()).into_owned(),
        v_rs: e.fixed_rows::<3>(Segment::RightShank.vel_offset()).into_owned(),
    }
}

pub fn state_log(x: &PoseState) -> Result<ErrorVec> {
    let mut e = ErrorVec::zeros();
    for seg in Segment::ALL {
        e.fixed_rows_mut::<6>(seg.pose_offset()).copy_from(&se3_log(x.pose(seg))?);
        e.fixed_rows_mut::<3>(seg.vel_offset()).copy_from(x.velocity(seg));
    }
    Ok(e)
}

/// `μ exp(ε)`.
pub fn perturb(mu: &PoseState, e: &ErrorVec) -> PoseState {
    mu.compose(&state_exp(e))
}

fn block_diag(blocks: [Mat6; 3], vel: Mat3) -> Cov {
    let mut m = Cov::zeros();
    for (i, b) in blocks.iter().enumerate() {
        m.fixed_view_mut::<6, 6>(6 * i, 6 * i).copy_from(b);
    }
    for i in 0..3 {
        m.fixed_view_mut::<3, 3>(POSE_DIM + 3 * i, POSE_DIM + 3 * i).copy_from(&vel);
    }
    m
}

pub fn state_adjoint(x: &PoseState) -> Cov {
    block_diag(
        [se3_adjoint(&x.pelvis), se3_adjoint(&x.left_shank), se3_adjoint(&x.right_shank)],
        Mat3::identity(),
    )
}

pub fn state_small_adjoint(e: &ErrorVec) -> Cov {
    block_diag(Segment::ALL.map(|s| se3_small_adjoint(&twist(e, s))), Mat3::zeros())
}

pub fn state_right_jacobian(e: &ErrorVec, n_terms: usize) -> Cov {
    block_diag(Segment::ALL.map(|s| se3_right_jacobian(&twist(e, s), n_terms)), Mat3::identity())
}

/// Concentrated Gaussian `μ exp(ε)`, `ε ~ N(0, cov)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub mu: PoseState,
    pub cov: Cov,
}

/// Symmetry tolerance for [`Belief::check_health`].
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Smallest eigenvalue tolerated by [`Belief::check_health`].
pub const EIGEN_FLOOR: f64 = -1e-9;

impl Belief {
    pub fn new(mu: PoseState, cov: Cov) -> Self {
        Belief { mu, cov }
    }

    pub fn with_scaled_identity(mu: PoseState, scale: f64) -> Self {
        Belief {
            mu,
            cov: Cov::identity() * scale,
        }
    }

    pub fn symmetrize(&mut self) {
        self.cov = (self.cov + self.cov.transpose()) * 0.5;
    }

    pub fn asymmetry(&self) -> f64 {
        (self.cov - self.cov.transpose()).abs().max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.cov).eigenvalues.min()
    }

    /// Replaces negative eigenvalues by zero.
    pub fn clamp_eigenvalues(&mut self) {
        let mut eig = SymmetricEigen::new(self.cov);
        eig.eigenvalues.apply(|l| *l = l.max(0.0));
        self.cov = eig.recompose();
        self.symmetrize();
    }

    pub fn is_finite(&self) -> bool {
        self.mu.is_finite() && self.cov.iter().all(|x| x.is_finite())
    }

    /// Fails with [`Error::NonFiniteState`] on NaN/inf. Symmetry and PSD are
    /// reported through [`Belief::asymmetry`] and [`Belief::min_eigenvalue`].
    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFiniteState)
        }
    }
}
