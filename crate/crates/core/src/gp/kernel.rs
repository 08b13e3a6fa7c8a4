use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Squared-exponential kernel hyperparameters plus the target noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Signal standard deviation `σ_f`.
    pub sigma_f: f64,
    /// One lengthscale per input dimension.
    pub lengthscales: Vec<f64>,
    /// Target noise standard deviation `σ_on`.
    pub sigma_on: f64,
}

impl Hyperparameters {
    pub fn new(sigma_f: f64, lengthscales: Vec<f64>, sigma_on: f64) -> Result<Self> {
        let h = Self {
            sigma_f,
            lengthscales,
            sigma_on,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn isotropic(sigma_f: f64, lengthscale: f64, dim: usize, sigma_on: f64) -> Result<Self> {
        Self::new(sigma_f, vec![lengthscale; dim], sigma_on)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.sigma_f) || !ok(self.sigma_on) || !self.lengthscales.iter().all(|&l| ok(l)) {
            return Err(Error::Config(format!(
                "hyperparameters must be positive and finite: {self:?}"
            )));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::Config("at least one lengthscale is required".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub(crate) fn inverse_squared_lengthscales(&self) -> Vec<f64> {
        self.lengthscales.iter().map(|l| 1.0 / (l * l)).collect()
    }

    /// `[ln σ_f, ln l₁, …, ln l_ρ, ln σ_on]`.
    pub fn to_log(&self) -> Vec<f64> {
        std::iter::once(self.sigma_f.ln())
            .chain(self.lengthscales.iter().map(|l| l.ln()))
            .chain(std::iter::once(self.sigma_on.ln()))
            .collect()
    }

    pub fn from_log(p: &[f64]) -> Self {
        let d = p.len() - 2;
        Self {
            sigma_f: p[0].exp(),
            lengthscales: p[1..=d].iter().map(|x| x.exp()).collect(),
            sigma_on: p[d + 1].exp(),
        }
    }
}

/// `k(x, x') = σ_f² exp(−Σ (x_i − x'_i)² / (2 l_i²))`.
pub fn se_kernel(hyper: &Hyperparameters, x: &[f64], x2: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), hyper.dim());
    debug_assert_eq!(x2.len(), hyper.dim());
    let mut s = 0.0;
    for ((a, b), l) in x.iter().zip(x2).zip(&hyper.lengthscales) {
        let d = (a - b) / l;
        s += d * d;
    }
    hyper.sigma_f * hyper.sigma_f * (-0.5 * s).exp()
}

/// Kernel with precomputed `1/l²`; the hot path of prediction.
#[inline]
pub(crate) fn se_kernel_scaled(sf2: f64, inv_l2: &[f64], x: &[f64], x2: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..inv_l2.len() {
        let d = x[i] - x2[i];
        s += d * d * inv_l2[i];
    }
    sf2 * (-0.5 * s).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_distance_gives_signal_variance() {
        let h = Hyperparameters::new(1.7, vec![0.3, 2.0], 0.1).unwrap();
        let x = [0.4, -1.2];
        assert!((se_kernel(&h, &x, &x) - 1.7 * 1.7).abs() < 1e-15);
    }

    #[test]
    fn closed_form_value() {
        let h = Hyperparameters::isotropic(1.0, 1.0, 1, 0.1).unwrap();
        let k = se_kernel(&h, &[0.0], &[2f64.sqrt()]);
        assert!((k - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn symmetric() {
        let h = Hyperparameters::new(0.8, vec![0.5, 1.5, 3.0], 0.1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert_eq!(se_kernel(&h, &a, &b), se_kernel(&h, &b, &a));
        }
    }

    #[test]
    fn rejects_non_positive() {
        assert!(Hyperparameters::new(0.0, vec![1.0], 0.1).is_err());
        assert!(Hyperparameters::new(1.0, vec![-1.0], 0.1).is_err());
        assert!(Hyperparameters::new(1.0, vec![1.0], 0.0).is_err());
    }

    #[test]
    fn log_round_trip() {
        let h = Hyperparameters::new(2.0, vec![0.5, 4.0], 0.01).unwrap();
        let back = Hyperparameters::from_log(&h.to_log());
        assert!((back.sigma_f - 2.0).abs() < 1e-12);
        assert!((back.lengthscales[1] - 4.0).abs() < 1e-12);
        assert!((back.sigma_on - 0.01).abs() < 1e-14);
    }
}
