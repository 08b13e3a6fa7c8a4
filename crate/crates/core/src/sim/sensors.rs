//! Encoder model and the offline differentiation pipeline.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::KinematicsSample;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorMode {
    /// Noisy encoder angles; rates and accelerations by numerical differentiation.
    #[default]
    Encoders,
    /// The plant's exact kinematics.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub sensor: SensorMode,
    /// Standard deviation of the white noise on both encoders [rad].
    #[serde(rename = "encoder_std_rad")]
    pub encoder_std: f64,
    /// Length of the centred moving average applied after each differentiation.
    pub moving_average_window: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sensor: SensorMode::Encoders,
            encoder_std: 2e-5,
            moving_average_window: 5,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.encoder_std >= 0.0 && self.encoder_std.is_finite()) {
            return Err(Error::Config("noise.encoder_std_rad must be non-negative".into()));
        }
        if self.moving_average_window == 0 || self.moving_average_window % 2 == 0 {
            return Err(Error::Config("noise.moving_average_window must be odd".into()));
        }
        Ok(())
    }
}

/// Centred first difference; one-sided at the ends.
pub fn central_difference(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| match k {
            0 => (x[1] - x[0]) / dt,
            k if k == n - 1 => (x[n - 1] - x[n - 2]) / dt,
            k => (x[k + 1] - x[k - 1]) / (2.0 * dt),
        })
        .collect()
}

/// Centred moving average of odd length; the window shrinks symmetrically at the ends.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = x.len();
    (0..n)
        .map(|k| {
            let h = half.min(k).min(n - 1 - k);
            x[k - h..=k + h].iter().sum::<f64>() / (2 * h + 1) as f64
        })
        .collect()
}

/// Derivative followed by smoothing, the pipeline used for every rate signal.
pub fn smoothed_derivative(x: &[f64], dt: f64, window: usize) -> Vec<f64> {
    moving_average(&central_difference(x, dt), window)
}

/// Converts exact plant samples into what the encoders and motor driver report.
///
/// `Exact` mode returns the samples unchanged. In `Encoders` mode both angles
/// get white noise, rates and accelerations come from two passes of
/// [`smoothed_derivative`], and the commanded torque is smoothed the same way so
/// that it stays time-aligned with the differentiated accelerations.
pub fn measure<R: Rng>(exact: &[KinematicsSample], dt: f64, cfg: &NoiseConfig, rng: &mut R) -> Vec<KinematicsSample> {
    match cfg.sensor {
        SensorMode::Exact => exact.to_vec(),
        SensorMode::Encoders => encoders(exact, dt, cfg, rng),
    }
}

fn encoders<R: Rng>(exact: &[KinematicsSample], dt: f64, cfg: &NoiseConfig, rng: &mut R) -> Vec<KinematicsSample> {
    let len = exact.len();
    if len == 0 {
        return Vec::new();
    }
    let n = exact[0].q.len();
    let w = cfg.moving_average_window;
    let mut noisy = |v: f64| v + cfg.encoder_std * rng.sample::<f64, _>(StandardNormal);
    // Draw in a fixed order (sample-major, q before θ_m) so realisations are reproducible.
    let mut q = vec![vec![0.0; len]; n];
    let mut tm = vec![vec![0.0; len]; n];
    for k in 0..len {
        for i in 0..n {
            q[i][k] = noisy(exact[k].q[i]);
            tm[i][k] = noisy(exact[k].theta_m[i]);
        }
    }
    let mut out: Vec<KinematicsSample> = exact.to_vec();
    for i in 0..n {
        let qd = smoothed_derivative(&q[i], dt, w);
        let qdd = smoothed_derivative(&qd, dt, w);
        let tmd = smoothed_derivative(&tm[i], dt, w);
        let tmdd = smoothed_derivative(&tmd, dt, w);
        // u[k] acts on (t_{k-1}, t_k]; average adjacent intervals to centre it on t_k.
        let u: Vec<f64> = (0..len)
            .map(|k| {
                let next = if k + 1 < len { exact[k + 1].tau_m[i] } else { exact[k].tau_m[i] };
                0.5 * (exact[k].tau_m[i] + next)
            })
            .collect();
        let u = moving_average(&moving_average(&u, w), w);
        for k in 0..len {
            let s = &mut out[k];
            s.q[i] = q[i][k];
            s.q_dot[i] = qd[k];
            s.q_ddot[i] = qdd[k];
            s.theta_m[i] = tm[i][k];
            s.theta_m_dot[i] = tmd[k];
            s.theta_m_ddot[i] = tmdd[k];
            s.tau_m[i] = u[k];
        }
    }
    out
}

/// Filter measurement `[θ_m, θ_s, θ̇_m, θ̇_s]` from a sample.
pub fn observation(s: &KinematicsSample) -> DVector<f64> {
    let n = s.q.len();
    let mut y = DVector::zeros(4 * n);
    y.rows_mut(0, n).copy_from(&s.theta_m);
    y.rows_mut(n, n).copy_from(&(&s.q - &s.theta_m));
    y.rows_mut(2 * n, n).copy_from(&s.theta_m_dot);
    y.rows_mut(3 * n, n).copy_from(&(&s.q_dot - &s.theta_m_dot));
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn difference_of_a_quadratic() {
        let dt = 0.01;
        let x: Vec<f64> = (0..50).map(|k| (k as f64 * dt).powi(2)).collect();
        let d = central_difference(&x, dt);
        for k in 1..49 {
            assert!((d[k] - 2.0 * k as f64 * dt).abs() < 1e-10);
        }
    }

    #[test]
    fn moving_average_keeps_lines() {
        let x: Vec<f64> = (0..20).map(|k| 3.0 * k as f64 - 1.0).collect();
        let m = moving_average(&x, 5);
        for (a, b) in x.iter().zip(&m) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(moving_average(&[1.0, 5.0, 9.0], 1), vec![1.0, 5.0, 9.0]);
    }

    fn sine_samples(len: usize, dt: f64) -> Vec<KinematicsSample> {
        (0..len)
            .map(|k| {
                let t = k as f64 * dt;
                let v = |x: f64| DVector::from_element(1, x);
                KinematicsSample {
                    t,
                    q: v(t.sin()),
                    q_dot: v(t.cos()),
                    q_ddot: v(-t.sin()),
                    theta_m: v(0.5 * t.sin()),
                    theta_m_dot: v(0.5 * t.cos()),
                    theta_m_ddot: v(-0.5 * t.sin()),
                    tau_m: v(1.0),
                }
            })
            .collect()
    }

    #[test]
    fn noiseless_encoders_recover_smooth_signals() {
        let dt = 0.01;
        let exact = sine_samples(600, dt);
        let cfg = NoiseConfig { encoder_std: 0.0, ..NoiseConfig::default() };
        let m = measure(&exact, dt, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        for k in 20..580 {
            assert!((m[k].q_dot[0] - exact[k].q_dot[0]).abs() < 1e-3);
            assert!((m[k].q_ddot[0] - exact[k].q_ddot[0]).abs() < 2e-3);
            assert!((m[k].tau_m[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_noise() {
        let exact = sine_samples(100, 0.01);
        let cfg = NoiseConfig::default();
        let a = measure(&exact, 0.01, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let b = measure(&exact, 0.01, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let c = measure(&exact, 0.01, &cfg, &mut ChaCha8Rng::seed_from_u64(10));
        assert_ne!(a, c);
    }

    #[test]
    fn exact_mode_is_identity() {
        let exact = sine_samples(30, 0.01);
        let cfg = NoiseConfig { sensor: SensorMode::Exact, ..NoiseConfig::default() };
        assert_eq!(measure(&exact, 0.01, &cfg, &mut ChaCha8Rng::seed_from_u64(0)), exact);
    }

    #[test]
    fn observation_layout() {
        let s = &sine_samples(3, 0.5)[2];
        let y = observation(s);
        assert_eq!(y[0], s.theta_m[0]);
        assert_eq!(y[1], s.q[0] - s.theta_m[0]);
        assert_eq!(y[3], s.q_dot[0] - s.theta_m_dot[0]);
    }
}
