//! Group and algebra operators for SO(3), SE(3) and R^n.
//!
//! Conventions used throughout the crate:
//!
//! * Perturbations are applied on the right: `X exp(ξ^)`.
//! * SE(3) algebra coordinates are ordered `(ρ, φ)`, translation first.
//! * `exp_series` and `right_jacobian_series` are generic series evaluations
//!   used as independent oracles for the closed forms.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Matrix6, SMatrix, Vector3, Vector4, Vector6};
use std::ops::Mul;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec4 = Vector4<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4 = Matrix4<f64>;
pub type Mat6 = Matrix6<f64>;
pub type Mat4x6 = SMatrix<f64, 4, 6>;

/// Below this angle the closed forms switch to their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-7;
/// `so3_log` refuses rotations with angle `>= PI - NEAR_PI_MARGIN`.
pub const NEAR_PI_MARGIN: f64 = 1e-6;
/// Orthonormality / determinant tolerance for rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;
const SKEW_TOL: f64 = 1e-9;
const ALGEBRA_TOL: f64 = 1e-12;

/// Element of SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3(Mat3);

impl Rotation3 {
    pub fn identity() -> Self {
        Rotation3(Mat3::identity())
    }

    /// Validates `mᵀm = I` and `det m = 1` within [`ROTATION_TOL`].
    pub fn new(m: Mat3) -> Result<Self> {
        let orthogonality = (m.transpose() * m - Mat3::identity()).abs().max();
        let det = m.determinant();
        if !orthogonality.is_finite() || orthogonality > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::NotARotation { orthogonality, det });
        }
        Ok(Rotation3(m))
    }

    /// Wraps a matrix the caller knows to be a rotation.
    pub fn new_unchecked(m: Mat3) -> Self {
        Rotation3(m)
    }

    /// Builds a rotation from its three column axes.
    pub fn from_axes(x: &Vec3, y: &Vec3, z: &Vec3) -> Result<Self> {
        Rotation3::new(Mat3::from_columns(&[*x, *y, *z]))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation3(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Column `i` of the matrix: the body `x`, `y` or `z` axis in world coordinates.
    pub fn axis(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    pub fn inverse(&self) -> Self {
        Rotation3(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation angle in `[0, PI]`.
    pub fn angle(&self) -> f64 {
        let w = skew_part(&self.0);
        let c = 0.5 * (self.0.trace() - 1.0);
        (0.5 * w.norm()).atan2(c)
    }

    pub fn exp(phi: &Vec3) -> Self {
        so3_exp(phi)
    }

    pub fn log(&self) -> Result<Vec3> {
        so3_log(self)
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

impl Mul<&Rotation3> for &Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: &Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

/// Element of SE(3): rotation plus translation in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose3 {
    pub rot: Rotation3,
    pub trans: Vec3,
}

impl Pose3 {
    pub fn identity() -> Self {
        Pose3 {
            rot: Rotation3::identity(),
            trans: Vec3::zeros(),
        }
    }

    pub fn new(rot: Rotation3, trans: Vec3) -> Self {
        Pose3 { rot, trans }
    }

    pub fn from_translation(trans: Vec3) -> Self {
        Pose3 {
            rot: Rotation3::identity(),
            trans,
        }
    }

    /// Parses a homogeneous 4×4 matrix, validating the rotation block and bottom row.
    pub fn from_matrix(m: &Mat4) -> Result<Self> {
        let bottom = m.fixed_view::<1, 4>(3, 0);
        if (bottom - nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0)).abs().max() > ALGEBRA_TOL {
            return Err(Error::MalformedAlgebra);
        }
        let rot = Rotation3::new(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        Ok(Pose3 {
            rot,
            trans: m.fixed_view::<3, 1>(0, 3).into_owned(),
        })
    }

    pub fn matrix(&self) -> Mat4 {
        let mut m = Mat4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.trans);
        m
    }

    pub fn inverse(&self) -> Self {
        se3_inverse(self)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rot.rotate(p) + self.trans
    }

    /// `T b` for a homogeneous 4-vector `b`.
    pub fn transform_homogeneous(&self, b: &Vec4) -> Vec4 {
        let xyz = self.rot.rotate(&b.xyz()) + self.trans * b.w;
        Vec4::new(xyz.x, xyz.y, xyz.z, b.w)
    }

    pub fn exp(xi: &Vec6) -> Self {
        se3_exp(xi)
    }

    pub fn log(&self) -> Result<Vec6> {
        se3_log(self)
    }
}

impl Mul for Pose3 {
    type Output = Pose3;
    fn mul(self, rhs: Pose3) -> Pose3 {
        &self * &rhs
    }
}

impl Mul<&Pose3> for &Pose3 {
    type Output = Pose3;
    fn mul(self, rhs: &Pose3) -> Pose3 {
        Pose3 {
            rot: self.rot * rhs.rot,
            trans: self.rot.rotate(&rhs.trans) + self.trans,
        }
    }
}

fn skew_part(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

// ---------------------------------------------------------------------------
// SO(3)
// ---------------------------------------------------------------------------

#[rustfmt::skip]
pub fn so3_hat(phi: &Vec3) -> Mat3 {
    Mat3::new(
         0.0,    -phi.z,  phi.y,
         phi.z,   0.0,   -phi.x,
        -phi.y,   phi.x,  0.0,
    )
}

pub fn so3_vee(m: &Mat3) -> Result<Vec3> {
    let asymmetry = (m + m.transpose()).abs().max();
    if !(asymmetry <= SKEW_TOL) {
        return Err(Error::NonSkewInput { asymmetry });
    }
    Ok(Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

/// Rodrigues formula.
pub fn so3_exp(phi: &Vec3) -> Rotation3 {
    let theta = phi.norm();
    let h = so3_hat(phi);
    if theta < SMALL_ANGLE {
        return Rotation3(Mat3::identity() + h + 0.5 * h * h);
    }
    let a = phi / theta;
    let (s, c) = theta.sin_cos();
    Rotation3(c * Mat3::identity() + (1.0 - c) * a * a.transpose() + s * so3_hat(&a))
}

pub fn so3_log(r: &Rotation3) -> Result<Vec3> {
    let m = r.matrix();
    let w = skew_part(m);
    let sin_theta = 0.5 * w.norm();
    let cos_theta = 0.5 * (m.trace() - 1.0);
    let theta = sin_theta.atan2(cos_theta);
    if theta >= std::f64::consts::PI - NEAR_PI_MARGIN {
        return Err(Error::NearPiRotation { angle: theta });
    }
    let factor = if theta < SMALL_ANGLE {
        0.5 * (1.0 + theta * theta / 6.0)
    } else {
        theta / (2.0 * sin_theta)
    };
    Ok(factor * w)
}

/// The `J` matrix that maps `ρ` to the translation of `exp(ξ)` (left Jacobian of SO(3)).
pub fn so3_left_jacobian(phi: &Vec3) -> Mat3 {
    let theta = phi.norm();
    let h = so3_hat(phi);
    if theta < SMALL_ANGLE {
        return Mat3::identity() + 0.5 * h + h * h / 6.0;
    }
    let a = phi / theta;
    let (s, c) = theta.sin_cos();
    let sinc = s / theta;
    sinc * Mat3::identity() + (1.0 - sinc) * a * a.transpose() + ((1.0 - c) / theta) * so3_hat(&a)
}

// ---------------------------------------------------------------------------
// SE(3)
// ---------------------------------------------------------------------------

pub fn se3_hat(xi: &Vec6) -> Mat4 {
    let mut m = Mat4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&so3_hat(&xi.fixed_rows::<3>(3).into_owned()));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.fixed_rows::<3>(0));
    m
}

pub fn se3_vee(m: &Mat4) -> Result<Vec6> {
    if m.row(3).abs().max() > ALGEBRA_TOL {
        return Err(Error::MalformedAlgebra);
    }
    let phi = so3_vee(&m.fixed_view::<3, 3>(0, 0).into_owned())?;
    let rho = m.fixed_view::<3, 1>(0, 3);
    Ok(Vec6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z))
}

pub fn se3_exp(xi: &Vec6) -> Pose3 {
    let rho = xi.fixed_rows::<3>(0).into_owned();
    let phi = xi.fixed_rows::<3>(3).into_owned();
    Pose3 {
        rot: so3_exp(&phi),
        trans: so3_left_jacobian(&phi) * rho,
    }
}

pub fn se3_log(t: &Pose3) -> Result<Vec6> {
    let phi = so3_log(&t.rot)?;
    let rho = so3_left_jacobian(&phi)
        .lu()
        .solve(&t.trans)
        .ok_or(Error::NearPiRotation { angle: phi.norm() })?;
    Ok(Vec6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z))
}

/// `[C, hat(r) C; 0, C]`.
pub fn se3_adjoint(t: &Pose3) -> Mat6 {
    let c = t.rot.matrix();
    let mut ad = Mat6::zeros();
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(c);
    ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&(so3_hat(&t.trans) * c));
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(c);
    ad
}

/// `[hat(φ), hat(ρ); 0, hat(φ)]`.
pub fn se3_small_adjoint(xi: &Vec6) -> Mat6 {
    let rho_hat = so3_hat(&xi.fixed_rows::<3>(0).into_owned());
    let phi_hat = so3_hat(&xi.fixed_rows::<3>(3).into_owned());
    let mut ad = Mat6::zeros();
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&phi_hat);
    ad.fixed_view_mut::<3, 3>(0, 3).copy_from(&rho_hat);
    ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&phi_hat);
    ad
}

pub fn se3_inverse(t: &Pose3) -> Pose3 {
    let rt = t.rot.inverse();
    Pose3 {
        rot: rt,
        trans: -rt.rotate(&t.trans),
    }
}

/// The `⊙` operator for a homogeneous point `b = (ε, η)`: `se3_hat(a) b = se3_odot(b) a`.
pub fn se3_odot(b: &Vec4) -> Mat4x6 {
    let mut m = Mat4x6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(b.w * Mat3::identity()));
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-so3_hat(&b.xyz())));
    m
}

/// Truncated right-Jacobian series `Σ_{i<n_terms} (-1)^i/(i+1)! ad(ξ)^i`.
pub fn se3_right_jacobian(xi: &Vec6, n_terms: usize) -> Mat6 {
    let ad = se3_small_adjoint(xi);
    let mut term = Mat6::identity();
    let mut sum = Mat6::identity();
    for i in 1..n_terms {
        term = -(term * ad) / (i as f64 + 1.0);
        sum += term;
    }
    sum
}

// ---------------------------------------------------------------------------
// R^n
// ---------------------------------------------------------------------------

/// R^n as an affine matrix group: `v ↦ [I v; 0 1]`.
pub mod rn {
    use super::{Error, Result, ALGEBRA_TOL};
    use nalgebra::{DMatrix, DVector};

    pub fn hat(v: &DVector<f64>) -> DMatrix<f64> {
        let n = v.len();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, n), (n, 1)).copy_from(v);
        m
    }

    pub fn vee(m: &DMatrix<f64>) -> Result<DVector<f64>> {
        let n = check_square(m)?;
        let mut pattern = m.clone();
        pattern.view_mut((0, n), (n, 1)).fill(0.0);
        if pattern.abs().max() > ALGEBRA_TOL {
            return Err(Error::MalformedAlgebra);
        }
        Ok(m.view_range(0..n, n).column(0).into_owned())
    }

    pub fn exp(v: &DVector<f64>) -> DMatrix<f64> {
        let n = v.len();
        let mut m = DMatrix::identity(n + 1, n + 1);
        m.view_mut((0, n), (n, 1)).copy_from(v);
        m
    }

    pub fn log(m: &DMatrix<f64>) -> Result<DVector<f64>> {
        let n = check_square(m)?;
        let mut pattern = m.clone();
        pattern.view_mut((0, n), (n, 1)).fill(0.0);
        if (pattern - DMatrix::identity(n + 1, n + 1)).abs().max() > ALGEBRA_TOL {
            return Err(Error::MalformedAlgebra);
        }
        Ok(m.view_range(0..n, n).column(0).into_owned())
    }

    pub fn adjoint(n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n)
    }

    pub fn small_adjoint(n: usize) -> DMatrix<f64> {
        DMatrix::zeros(n, n)
    }

    pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(exp(&(-log(m)?)))
    }

    fn check_square(m: &DMatrix<f64>) -> Result<usize> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::MalformedAlgebra);
        }
        Ok(m.nrows() - 1)
    }
}

// ---------------------------------------------------------------------------
// Series oracles
// ---------------------------------------------------------------------------

/// Matrix exponential from the power series `Σ_{k=0}^{n_terms} A^k/k!`.
///
/// The argument is first scaled by `2^-s` so that its 1-norm is at most 1/2,
/// and the truncated sum is squared back `s` times. Without the scaling a
/// 20-term sum leaves a truncation error of about 1e-9 at |φ| = 3.
pub fn exp_series(a: &DMatrix<f64>, n_terms: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = (0..n).map(|j| a.column(j).abs().sum()).fold(0.0, f64::max);
    let mut squarings = 0;
    while norm / 2f64.powi(squarings) > 0.5 {
        squarings += 1;
    }
    let b = a / 2f64.powi(squarings);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=n_terms.max(1) {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Group whose small adjoint feeds [`right_jacobian_series`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    So3,
    Se3,
    Rn(usize),
}

/// `Σ_{i<n_terms} (-1)^i/(i+1)! ad(v)^i` for any of the supported groups.
pub fn right_jacobian_series(group: Group, v: &DVector<f64>, n_terms: usize) -> DMatrix<f64> {
    let ad = match group {
        Group::So3 => {
            let phi = Vec3::new(v[0], v[1], v[2]);
            DMatrix::from_iterator(3, 3, so3_hat(&phi).iter().copied())
        }
        Group::Se3 => {
            let xi = Vec6::from_iterator(v.iter().copied());
            DMatrix::from_iterator(6, 6, se3_small_adjoint(&xi).iter().copied())
        }
        Group::Rn(n) => rn::small_adjoint(n),
    };
    let dim = ad.nrows();
    let mut term = DMatrix::identity(dim, dim);
    let mut sum = DMatrix::identity(dim, dim);
    for i in 1..n_terms {
        term = -(&term * &ad) / (i as f64 + 1.0);
        sum += &term;
    }
    sum
}
