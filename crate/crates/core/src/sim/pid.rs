use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Anti-windup clamp on the integral term's contribution [N·m].
    #[serde(rename = "integral_limit_Nm", default = "default_integral_limit")]
    pub integral_limit: f64,
}

fn default_integral_limit() -> f64 {
    10.0
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 80.0,
            ki: 20.0,
            kd: 5.0,
            integral_limit: default_integral_limit(),
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.kp) && ok(self.ki) && ok(self.kd) && ok(self.integral_limit)) {
            return Err(Error::Config("PID gains must be non-negative".into()));
        }
        Ok(())
    }
}

/// Position PID with derivative on the measurement and a clamped integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct Pid {
    pub gains: PidGains,
    integral: DVector<f64>,
}

impl Pid {
    pub fn new(gains: PidGains, joints: usize) -> Self {
        Self {
            gains,
            integral: DVector::zeros(joints),
        }
    }

    /// Starts with the integrator already producing `torque`.
    pub fn preloaded(gains: PidGains, torque: &DVector<f64>) -> Self {
        let mut p = Self::new(gains, torque.len());
        if p.gains.ki > 0.0 {
            p.integral = torque / p.gains.ki;
        }
        p
    }

    pub fn integral(&self) -> &DVector<f64> {
        &self.integral
    }

    pub fn update(&mut self, reference: &[f64], q: &DVector<f64>, q_dot: &DVector<f64>, dt: f64) -> DVector<f64> {
        let g = &self.gains;
        let mut u = DVector::zeros(q.len());
        for i in 0..q.len() {
            let e = reference[i] - q[i];
            if g.ki > 0.0 {
                let lim = g.integral_limit / g.ki;
                self.integral[i] = (self.integral[i] + e * dt).clamp(-lim, lim);
            }
            u[i] = g.kp * e + g.ki * self.integral[i] - g.kd * q_dot[i];
        }
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_gives_zero_torque() {
        let mut p = Pid::new(PidGains::default(), 1);
        let u = p.update(&[0.3], &DVector::from_element(1, 0.3), &DVector::zeros(1), 0.01);
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn proportional_only() {
        let gains = PidGains { kp: 50.0, ki: 0.0, kd: 0.0, integral_limit: 1.0 };
        let mut p = Pid::new(gains, 1);
        let u = p.update(&[0.2], &DVector::zeros(1), &DVector::from_element(1, 3.0), 0.01);
        assert!((u[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_acts_on_measurement() {
        let gains = PidGains { kp: 0.0, ki: 0.0, kd: 4.0, integral_limit: 1.0 };
        let mut p = Pid::new(gains, 1);
        let u = p.update(&[1.0], &DVector::zeros(1), &DVector::from_element(1, 0.5), 0.01);
        assert!((u[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn integral_is_clamped() {
        let gains = PidGains { kp: 0.0, ki: 10.0, kd: 0.0, integral_limit: 2.0 };
        let mut p = Pid::new(gains, 1);
        let mut u = DVector::zeros(1);
        for _ in 0..1000 {
            u = p.update(&[1.0], &DVector::zeros(1), &DVector::zeros(1), 0.01);
        }
        assert!((u[0] - 2.0).abs() < 1e-12);
    }
}
