//! Ground-truth simulator of the coupled load/motor dynamics, including the
//! hidden residual and the true active torque.

use nalgebra::DVector;

use super::discretize::rk4_step;
use super::model::spring_torque;
use super::params::SeaParams;
use super::residual::HiddenResidual;
use super::state::{KinematicsSample, PlantState};
use crate::linalg::spd_inverse;
use crate::{Error, Result};

/// `(q̈, θ̈_m)` of the true plant.
pub fn plant_accelerations(
    params: &SeaParams,
    hidden: &HiddenResidual,
    s: &PlantState,
    u: &DVector<f64>,
    tau_act: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = params.joints();
    let theta_s = &s.q - &s.theta_m;
    let theta_s_dot = &s.q_dot - &s.theta_m_dot;
    let tau_s = spring_torque(params, &theta_s, &theta_s_dot);
    // f is affine in q̈; move its q̈ part to the left-hand side.
    let effective_inertia = params.load.inertia(&s.q) + hidden.acceleration_gain();
    let inv = spd_inverse(&effective_inertia, params.condition_limit)?;
    let f0 = hidden.residual(&s.q, &s.q_dot, &DVector::zeros(n));
    let q_ddot = inv * (tau_act - params.load.bias(&s.q, &s.q_dot) - f0 - &tau_s);
    let theta_m_ddot =
        params.motor_inertia_inv() * (u + tau_s - &params.motor_damping * &s.theta_m_dot);
    Ok((q_ddot, theta_m_ddot))
}

/// Result of one plant integration step.
#[derive(Debug, Clone)]
pub struct PlantStep {
    pub state: PlantState,
    /// Exact kinematics at the end of the step (inputs held over the step).
    pub sample: KinematicsSample,
}

/// Advance the true plant by one fixed RK4 step of length `dt`.
pub fn plant_step(
    params: &SeaParams,
    hidden: &HiddenResidual,
    state: &PlantState,
    u: &DVector<f64>,
    tau_act: &DVector<f64>,
    dt: f64,
    t: f64,
) -> Result<PlantStep> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("plant step must be positive, got {dt}")));
    }
    let n = params.joints();
    let deriv = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let s = PlantState::unpack(v);
        let (q_ddot, theta_m_ddot) = plant_accelerations(params, hidden, &s, u, tau_act)?;
        let mut d = DVector::zeros(4 * n);
        d.rows_mut(0, n).copy_from(&s.q_dot);
        d.rows_mut(n, n).copy_from(&s.theta_m_dot);
        d.rows_mut(2 * n, n).copy_from(&q_ddot);
        d.rows_mut(3 * n, n).copy_from(&theta_m_ddot);
        Ok(d)
    };
    let next = rk4_step(deriv, &state.pack(), dt)?;
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("plant state"));
    }
    let state = PlantState::unpack(&next);
    let (q_ddot, theta_m_ddot) = plant_accelerations(params, hidden, &state, u, tau_act)?;
    let sample = KinematicsSample {
        t: t + dt,
        q: state.q.clone(),
        q_dot: state.q_dot.clone(),
        q_ddot,
        theta_m: state.theta_m.clone(),
        theta_m_dot: state.theta_m_dot.clone(),
        theta_m_ddot,
        tau_m: u.clone(),
    };
    Ok(PlantStep { state, sample })
}

/// Static equilibrium of the plant at load angle `q` under a constant active
/// torque. Returns the plant state and the motor torque that holds it.
pub fn static_equilibrium(
    params: &SeaParams,
    hidden: &HiddenResidual,
    q: &DVector<f64>,
    tau_act: &DVector<f64>,
) -> Result<(PlantState, DVector<f64>)> {
    let n = params.joints();
    let zero = DVector::zeros(n);
    // Load side at rest: C + f + τ_s = τ_act.
    let tau_s = tau_act - params.load.bias(q, &zero) - hidden.residual(q, &zero, &zero);
    let theta_s = invert_spring(params, &tau_s)?;
    let state = PlantState {
        q: q.clone(),
        q_dot: zero.clone(),
        theta_m: q - &theta_s,
        theta_m_dot: zero,
    };
    // Motor side at rest: −τ_s = τ_m.
    Ok((state, -tau_s))
}

/// Spring deflection producing a static torque (Newton iteration for nonlinear laws).
fn invert_spring(params: &SeaParams, tau: &DVector<f64>) -> Result<DVector<f64>> {
    let n = params.joints();
    let zero = DVector::zeros(n);
    let mut theta = DVector::zeros(n);
    for _ in 0..50 {
        let r = params.spring.torque(&theta, &zero) - tau;
        if r.amax() < 1e-13 {
            break;
        }
        let k = params.spring.stiffness_jacobian(&theta);
        let step = k
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::Domain("spring stiffness is singular".into()))?;
        theta -= step;
    }
    Ok(theta)
}
