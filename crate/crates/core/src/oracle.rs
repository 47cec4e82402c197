//! Central finite-difference Jacobians through the right perturbation, used to
//! check the analytic models.

use nalgebra::{DMatrix, DVector};

use crate::lie::{so3_log, Rotation3};
use crate::state::{perturb, ErrorVec, PoseState, STATE_DIM};

/// Column `j` is `(f(μ exp(h e_j)) - f(μ exp(-h e_j))) / 2h`.
pub fn numeric_jacobian<F>(f: F, mu: &PoseState, h: f64) -> DMatrix<f64>
where
    F: Fn(&PoseState) -> DVector<f64>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let rows = f(mu).len();
    let mut jac = DMatrix::zeros(rows, STATE_DIM);
    for j in 0..STATE_DIM {
        let mut e = ErrorVec::zeros();
        e[j] = h;
        let plus = f(&perturb(mu, &e));
        let minus = f(&perturb(mu, &-e));
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    jac
}

/// Like [`numeric_jacobian`] for rotation-valued functions: each output
/// rotation is differenced as `vee(log(R(μ)ᵀ R(x)))`.
pub fn numeric_rotation_jacobian<F>(f: F, mu: &PoseState, h: f64) -> DMatrix<f64>
where
    F: Fn(&PoseState) -> Vec<Rotation3>,
{
    let base = f(mu);
    let relative = |x: &PoseState| -> DVector<f64> {
        let rots = f(x);
        let mut out = DVector::zeros(3 * rots.len());
        for (i, (r0, r)) in base.iter().zip(&rots).enumerate() {
            let d = so3_log(&(r0.inverse() * *r)).expect("finite-difference step stays far from pi");
            out.rows_mut(3 * i, 3).copy_from(&d);
        }
        out
    };
    numeric_jacobian(relative, mu, h)
}
