use nalgebra::{DMatrix, DVector};

use super::config::{FilterConfig, FilterState};
use crate::error::ensure_finite;
use crate::linalg::symmetrize;
use crate::{Error, Result};

/// Discrete-time prediction model with its state Jacobian.
pub trait DiscreteModel {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl DiscreteModel for LinearModel {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.a * x + &self.b * u)
    }

    fn jacobian(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.a.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub transition: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
}

/// `x⁻ = f(x̂, u)`, `P⁻ = F P Fᵀ + Q`.
pub fn ekf_predict<M: DiscreteModel + ?Sized>(
    fs: &FilterState,
    u: &DVector<f64>,
    model: &M,
    q: &DMatrix<f64>,
) -> Result<Prior> {
    let x = model.step(&fs.x, u)?;
    ensure_finite(&x, "predicted state")?;
    let f = model.jacobian(&fs.x, u)?;
    let mut p = &f * &fs.p * f.transpose() + q;
    symmetrize(&mut p);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prior covariance"));
    }
    Ok(Prior { x, p, transition: f })
}

/// Kalman update against measurement `y`.
pub fn ekf_update(cfg: &FilterConfig, prior: &Prior, y: &DVector<f64>) -> Result<Posterior> {
    let h = &cfg.h;
    if y.len() != h.nrows() {
        return Err(Error::Dimension(format!("measurement has {} entries, expected {}", y.len(), h.nrows())));
    }
    let pht = &prior.p * h.transpose();
    let mut s = h * &pht + &cfg.r;
    symmetrize(&mut s);
    let chol = s.clone().cholesky().ok_or(Error::InnovationSingular)?;
    // K = P Hᵀ S⁻¹, solved as S Kᵀ = H P.
    let gain = chol.solve(&pht.transpose()).transpose();
    let innovation = y - h * &prior.x;
    let x = &prior.x + &gain * &innovation;
    let d = prior.x.len();
    let ikh = DMatrix::identity(d, d) - &gain * h;
    let mut p = if cfg.joseph {
        &ikh * &prior.p * ikh.transpose() + &gain * &cfg.r * gain.transpose()
    } else {
        &ikh * &prior.p
    };
    symmetrize(&mut p);
    ensure_finite(&x, "posterior state")?;
    Ok(Posterior {
        x,
        p,
        gain,
        innovation,
        innovation_cov: s,
    })
}
