use nalgebra::{DMatrix, DVector};

use super::ellipsoid::Ellipsoid;
use crate::{Error, Result};

/// `|f_i(z) − μ_i(z)| ≤ β σ_i(z)` for every output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpErrorBound {
    pub beta: f64,
}

impl GpErrorBound {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("GP bound scale must be positive, got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn radii(&self, sigma: &DVector<f64>) -> DVector<f64> {
        sigma.map(|s| self.beta * s.max(0.0))
    }
}

/// The interval `|f − μ| ≤ η` written as the one-dimensional ellipsoid `E(μ, η²)`.
pub fn interval_ellipsoid(mu: f64, eta: f64) -> Ellipsoid {
    Ellipsoid {
        center: DVector::from_element(1, mu),
        shape: DMatrix::from_element(1, 1, eta * eta),
    }
}

/// Outer ellipsoid of the box `∏ [μ_i − η_i, μ_i + η_i]`: the embedded
/// one-dimensional ellipsoids folded pairwise in index order.
pub fn box_enclosure(mu: &DVector<f64>, eta: &DVector<f64>) -> Ellipsoid {
    let n = mu.len();
    let embed = |i: usize| {
        let mut c = DVector::zeros(n);
        c[i] = mu[i];
        let mut x = DMatrix::zeros(n, n);
        x[(i, i)] = eta[i] * eta[i];
        Ellipsoid { center: c, shape: x }
    };
    (1..n).fold(embed(0), |acc, i| acc.minkowski_outer(&embed(i)))
}

/// Residual error set mapped into the discrete state update.
///
/// The prediction subtracts `I_μ M⁻¹ μ dt`, so the state perturbation caused
/// by the GP error is `−I_μ M⁻¹ (f − μ) dt`, centred at zero.
pub fn gp_error_ellipsoid(
    bound: &GpErrorBound,
    mu: &DVector<f64>,
    sigma: &DVector<f64>,
    input_map: &DMatrix<f64>,
    dt: f64,
) -> Ellipsoid {
    let enclosure = box_enclosure(mu, &bound.radii(sigma));
    let a = input_map * (-dt);
    enclosure.affine_map(&a, &(&a * mu * -1.0))
}
