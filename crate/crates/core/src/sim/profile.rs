use nalgebra::DVector;

use crate::dynamics::{HiddenResidual, SeaParams};
use crate::{Error, Result};

/// Desired torque of the resistance trial, `A·(1 − cos 2πft)` with `A = 2`.
///
/// The profile rises from zero to a peak of `2A` at half a period.
pub fn resistance_profile(frequency: f64, t: f64) -> f64 {
    resistance_profile_scaled(2.0, frequency, t)
}

pub fn resistance_profile_scaled(amplitude: f64, frequency: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    amplitude * (1.0 - (2.0 * std::f64::consts::PI * frequency * t).cos())
}

/// Motor torque cancelling the static gravity and friction load at `q_hold`.
///
/// With `τ_m = τ_des + τ_comp` the plant stays at rest exactly when the user
/// pushes back with `τ_act = −τ_des`.
pub fn static_compensation(params: &SeaParams, hidden: &HiddenResidual, q_hold: &DVector<f64>) -> Result<DVector<f64>> {
    let n = params.joints();
    if q_hold.len() != n {
        return Err(Error::Dimension(format!("hold position has {} entries, expected {n}", q_hold.len())));
    }
    let zero = DVector::zeros(n);
    Ok(params.load.bias(q_hold, &zero) + hidden.residual(q_hold, &zero, &zero))
}
