//! Augmented-state SEA model used by the estimators.

use nalgebra::{DMatrix, DVector};

use super::params::SeaParams;
use super::state::{Block, KinematicsSample};
use crate::error::ensure_finite;
use crate::Result;

/// Transmission torque `τ_s = K_s θ_s + D_s θ̇_s` under the configured law.
pub fn spring_torque(
    params: &SeaParams,
    theta_s: &DVector<f64>,
    theta_s_dot: &DVector<f64>,
) -> DVector<f64> {
    params.spring.torque(theta_s, theta_s_dot)
}

struct Split {
    theta_m_dot: DVector<f64>,
    theta_s: DVector<f64>,
    theta_s_dot: DVector<f64>,
    tau_act: DVector<f64>,
    q: DVector<f64>,
    q_dot: DVector<f64>,
}

fn split(x: &DVector<f64>, n: usize) -> Split {
    let get = |b: Block| x.rows(b.offset(n), n).into_owned();
    let theta_m = get(Block::MotorAngle);
    let theta_s = get(Block::SpringDeflection);
    let theta_m_dot = get(Block::MotorVelocity);
    let theta_s_dot = get(Block::SpringVelocity);
    Split {
        q: &theta_s + &theta_m,
        q_dot: &theta_s_dot + &theta_m_dot,
        theta_m_dot,
        theta_s,
        theta_s_dot,
        tau_act: get(Block::ActiveTorque),
    }
}

/// Motor and spring-deflection accelerations of the augmented model.
fn accelerations(
    params: &SeaParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
    residual: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = params.joints();
    let s = split(x, n);
    let tau_s = spring_torque(params, &s.theta_s, &s.theta_s_dot);
    let m_inv = params.load_inertia_inv(&s.q)?;
    let theta_m_ddot =
        params.motor_inertia_inv() * (u + &tau_s - &params.motor_damping * &s.theta_m_dot);
    let c = params.load.bias(&s.q, &s.q_dot);
    let q_ddot = m_inv * (&s.tau_act - residual - c - tau_s);
    Ok((theta_m_ddot.clone(), q_ddot - theta_m_ddot))
}

/// `ẋ = f_nom(x, u) − I_μ M⁻¹ r` for the augmented state `x`.
///
/// The active-torque block has zero dynamics.
pub fn nominal_dynamics(
    params: &SeaParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
    residual_mean: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = params.joints();
    let (theta_m_ddot, theta_s_ddot) = accelerations(params, x, u, residual_mean)?;
    let mut dx = DVector::zeros(5 * n);
    dx.rows_mut(0, n)
        .copy_from(&x.rows(Block::MotorVelocity.offset(n), n));
    dx.rows_mut(n, n)
        .copy_from(&x.rows(Block::SpringVelocity.offset(n), n));
    dx.rows_mut(2 * n, n).copy_from(&theta_m_ddot);
    dx.rows_mut(3 * n, n).copy_from(&theta_s_ddot);
    ensure_finite(&dx, "nominal dynamics")?;
    Ok(dx)
}

/// `∂f_nom/∂x` at `(x, u)`.
///
/// Analytic for loads with constant inertia and known bias partials; central
/// finite differences of [`nominal_dynamics`] otherwise.
pub fn nominal_jacobian(
    params: &SeaParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = params.joints();
    let s = split(x, n);
    let partials = if params.load.has_constant_inertia() {
        params.load.bias_partials(&s.q, &s.q_dot)
    } else {
        None
    };
    let Some((c_q, c_v)) = partials else {
        return finite_difference_jacobian(params, x, u);
    };
    let m_inv = params.load_inertia_inv(&s.q)?;
    let j_inv = params.motor_inertia_inv();
    let k = params.spring.stiffness_jacobian(&s.theta_s);
    let d_s = params.spring.damping();
    let d_m = &params.motor_damping;
    let eye = DMatrix::<f64>::identity(n, n);

    let mut f = DMatrix::zeros(5 * n, 5 * n);
    let mut put = |r: usize, c: usize, m: &DMatrix<f64>| {
        f.view_mut((r * n, c * n), (n, n)).copy_from(m);
    };
    put(0, 2, &eye);
    put(1, 3, &eye);

    let jk = j_inv * &k;
    let jds = j_inv * d_s;
    let jdm = j_inv * d_m;
    put(2, 1, &jk);
    put(2, 2, &(-&jdm));
    put(2, 3, &jds);

    put(3, 0, &(-(&m_inv * &c_q)));
    put(3, 1, &(-(&m_inv * (&c_q + &k)) - &jk));
    put(3, 2, &(-(&m_inv * &c_v) + &jdm));
    put(3, 3, &(-(&m_inv * (&c_v + d_s)) - &jds));
    put(3, 4, &m_inv);
    Ok(f)
}

/// Central-difference Jacobian of the nominal dynamics (residual held at zero).
pub fn finite_difference_jacobian(
    params: &SeaParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let d = x.len();
    let zero = DVector::zeros(params.joints());
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (nominal_dynamics(params, &xp, u, &zero)?
            - nominal_dynamics(params, &xm, u, &zero)?)
            / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// `I_μ M⁻¹(q)`: maps a load-side torque residual into the augmented state
/// derivative (it only touches the `θ̈_s` rows).
pub fn residual_input_map(params: &SeaParams, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = params.joints();
    let m_inv = params.load_inertia_inv(q)?;
    let mut g = DMatrix::zeros(5 * n, n);
    g.view_mut((Block::SpringVelocity.offset(n), 0), (n, n))
        .copy_from(&m_inv);
    Ok(g)
}

/// GP input `z = [q, q̇, q̈]` implied by an augmented state.
///
/// `q̈ = θ̈_m + θ̈_s` is evaluated from the model itself, using `residual` as the
/// current estimate of `f`.
pub fn reconstruct_z(
    params: &SeaParams,
    x: &DVector<f64>,
    u: &DVector<f64>,
    residual: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = params.joints();
    let s = split(x, n);
    let (theta_m_ddot, theta_s_ddot) = accelerations(params, x, u, residual)?;
    let mut z = DVector::zeros(3 * n);
    z.rows_mut(0, n).copy_from(&s.q);
    z.rows_mut(n, n).copy_from(&s.q_dot);
    z.rows_mut(2 * n, n).copy_from(&(theta_m_ddot + theta_s_ddot));
    Ok(z)
}

/// `∂z/∂x` for [`reconstruct_z`], given the nominal Jacobian at the same point.
pub fn z_jacobian(n: usize, nominal_jac: &DMatrix<f64>) -> DMatrix<f64> {
    let mut dz = DMatrix::zeros(3 * n, 5 * n);
    for i in 0..n {
        dz[(i, Block::MotorAngle.offset(n) + i)] = 1.0;
        dz[(i, Block::SpringDeflection.offset(n) + i)] = 1.0;
        dz[(n + i, Block::MotorVelocity.offset(n) + i)] = 1.0;
        dz[(n + i, Block::SpringVelocity.offset(n) + i)] = 1.0;
    }
    let qdd = nominal_jac.rows(2 * n, n) + nominal_jac.rows(3 * n, n);
    dz.rows_mut(2 * n, n).copy_from(&qdd);
    dz
}

/// Inverse-dynamics residual `f(z) = τ_m − (M q̈ + C + J θ̈_m + D_m θ̇_m)`,
/// valid while the human is passive.
pub fn residual_target(params: &SeaParams, s: &KinematicsSample) -> DVector<f64> {
    let tau_l = params.load.inertia(&s.q) * &s.q_ddot + params.load.bias(&s.q, &s.q_dot);
    &s.tau_m - (tau_l + &params.motor_inertia * &s.theta_m_ddot + &params.motor_damping * &s.theta_m_dot)
}
