use nalgebra::{DMatrix, DVector};

use super::model::nominal_dynamics;
use super::params::SeaParams;
use crate::{Error, Result};

/// One classical fourth-order Runge-Kutta step of `ẋ = f(x)`.
pub fn rk4_step<F>(f: F, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = f(x)?;
    let k2 = f(&(x + &k1 * (0.5 * dt)))?;
    let k3 = f(&(x + &k2 * (0.5 * dt)))?;
    let k4 = f(&(x + &k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Discrete prediction of the GP-augmented model: one RK4 step with the
/// residual mean and the input held constant.
pub fn discretize_step(
    params: &SeaParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
    residual_mean: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    rk4_step(|v| nominal_dynamics(params, v, u, residual_mean), x, dt)
}

/// First-order transition matrix `F_d = I + F dt`.
pub fn discretize_jacobian(f: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    DMatrix::identity(f.nrows(), f.ncols()) + f * dt
}
