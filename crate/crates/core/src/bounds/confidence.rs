use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::chi2::chi_square_scale;
use super::ellipsoid::Ellipsoid;
use super::gp_bound::{gp_error_ellipsoid, GpErrorBound};
use super::linearization::{linearization_error_ellipsoid, map_jacobian, outer_samples};
use crate::dynamics::{discretize_step, reconstruct_z, residual_input_map, SeaParams};
use crate::estimators::{FilterConfig, StepRecord};
use crate::gp::ResidualModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    /// GP error scale: `|f − μ| ≤ β σ`.
    pub beta: f64,
    /// Allowed miss probability of the confidence set.
    pub delta: f64,
    /// Multiplier on each sampled linearisation error.
    pub safety_factor: f64,
    /// Use the one-degree-of-freedom chi-square scale instead of the full state dimension.
    pub per_coordinate: bool,
    pub linearization: bool,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            beta: 2.0,
            delta: 0.05,
            safety_factor: 1.5,
            per_coordinate: false,
            linearization: true,
        }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        GpErrorBound::new(self.beta)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.safety_factor >= 1.0 && self.safety_factor.is_finite()) {
            return Err(Error::Config("safety factor must be at least 1".into()));
        }
        Ok(())
    }

    pub fn scale(&self, state_dim: usize) -> Result<f64> {
        chi_square_scale(self.delta, if self.per_coordinate { 1 } else { state_dim })
    }
}

/// Set of means paired with the filter covariance scaled by `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceSet {
    pub means: Ellipsoid,
    pub covariance: DMatrix<f64>,
    pub scale: f64,
    pub delta: f64,
}

impl ConfidenceSet {
    /// Degenerate set of means at `x0`.
    pub fn initial(x0: DVector<f64>, p0: DMatrix<f64>, scale: f64, delta: f64) -> Self {
        Self {
            means: Ellipsoid::point(x0),
            covariance: p0,
            scale,
            delta,
        }
    }

    /// `E(x̂, X̂) ⊕ E(0, s P)`.
    pub fn region(&self) -> Ellipsoid {
        let cov = Ellipsoid {
            center: DVector::zeros(self.means.dim()),
            shape: &self.covariance * self.scale,
        };
        self.means.minkowski_outer(&cov)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.region().contains(x)
    }

    /// Interval `[c − ρ, c + ρ]` on coordinate `i`, `ρ = √X̂_ii + √(s P_ii)`.
    pub fn coordinate_interval(&self, i: usize) -> (f64, f64) {
        let rho = self.means.axis_radius(i) + (self.scale * self.covariance[(i, i)]).max(0.0).sqrt();
        (self.means.center[i], rho)
    }

    /// Centres and radii of the last `n` coordinates (the active torque block).
    pub fn torque_interval(&self) -> (DVector<f64>, DVector<f64>) {
        let d = self.means.dim();
        let n = d / 5;
        let mut c = DVector::zeros(n);
        let mut r = DVector::zeros(n);
        for i in 0..n {
            (c[i], r[i]) = self.coordinate_interval(4 * n + i);
        }
        (c, r)
    }
}

/// One recursion of the confidence set alongside a filter step.
///
/// The means are pushed through the transition matrix (centred on the
/// nonlinear prediction), enlarged by the GP and linearisation error sets,
/// then corrected with the filter gain.
#[allow(clippy::too_many_arguments)]
pub fn confidence_step(
    set: &ConfidenceSet,
    prior_mean: &DVector<f64>,
    transition: &DMatrix<f64>,
    gp_error: &Ellipsoid,
    linearization_error: &Ellipsoid,
    gain: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    posterior_cov: &DMatrix<f64>,
) -> ConfidenceSet {
    let offset = prior_mean - transition * &set.means.center;
    let prior = set
        .means
        .affine_map(transition, &offset)
        .minkowski_outer(gp_error)
        .minkowski_outer(linearization_error);
    let d = prior_mean.len();
    let ikh = DMatrix::identity(d, d) - gain * h;
    ConfidenceSet {
        means: prior.affine_map(&ikh, &(gain * y)),
        covariance: posterior_cov.clone(),
        scale: set.scale,
        delta: set.delta,
    }
}

/// Per-step export of the bound layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSample {
    pub t: f64,
    pub torque_center: DVector<f64>,
    pub torque_radius: DVector<f64>,
    pub means_trace: f64,
    pub scale: f64,
    /// Whether the true augmented state lies in `C_k` (simulation only).
    pub covered: Option<bool>,
    pub torque_covered: Option<bool>,
}

/// Runs the confidence-set recursion next to a GP-enhanced filter.
pub struct BoundTracker<'a> {
    cfg: BoundConfig,
    bound: GpErrorBound,
    params: &'a SeaParams,
    residual: &'a dyn ResidualModel,
    dt: f64,
    h: DMatrix<f64>,
    set: ConfidenceSet,
}

impl<'a> BoundTracker<'a> {
    pub fn new(
        cfg: BoundConfig,
        filter: &FilterConfig,
        params: &'a SeaParams,
        residual: &'a dyn ResidualModel,
    ) -> Result<Self> {
        cfg.validate()?;
        let scale = cfg.scale(filter.state_dim())?;
        Ok(Self {
            bound: GpErrorBound::new(cfg.beta)?,
            set: ConfidenceSet::initial(filter.x0.clone(), filter.p0.clone(), scale, cfg.delta),
            cfg,
            params,
            residual,
            dt: filter.dt,
            h: filter.h.clone(),
        })
    }

    pub fn set(&self) -> &ConfidenceSet {
        &self.set
    }

    /// Advances with the filter's record of the same step and the measurement it used.
    pub fn step(&mut self, record: &StepRecord, y: &DVector<f64>) -> Result<()> {
        let n = self.params.joints();
        let x_prev = self.set.means.center.clone();
        let q = x_prev.rows(0, n) + x_prev.rows(n, n);
        let g = residual_input_map(self.params, &q)?;
        let sigma = record.residual_var.map(|v| v.max(0.0).sqrt());
        let gp_err = gp_error_ellipsoid(&self.bound, &record.residual_mean, &sigma, &g, self.dt);
        let map = |x: &DVector<f64>| -> Result<DVector<f64>> {
            let mut z = reconstruct_z(self.params, x, &record.u, &record.residual_mean)?;
            if let Some(a) = &record.measured_acceleration {
                z.rows_mut(2 * n, n).copy_from(a);
            }
            let mu = self.residual.predict_mean(&z);
            discretize_step(self.params, x, &record.u, &mu, self.dt)
        };
        // The filter's covariance uses I + F·dt, which is too coarse for a stiff
        // spring; the set follows the Jacobian of the actual prediction map.
        let transition = map_jacobian(&map, &x_prev)?;
        let lin_err = if self.cfg.linearization {
            let samples = outer_samples(&self.set.means, &(&self.set.covariance * self.set.scale));
            linearization_error_ellipsoid(map, &x_prev, &transition, &samples, self.cfg.safety_factor)?
        } else {
            Ellipsoid::point(DVector::zeros(x_prev.len()))
        };
        self.set = confidence_step(
            &self.set,
            &record.prior_x,
            &transition,
            &gp_err,
            &lin_err,
            &record.gain,
            &self.h,
            y,
            &record.p,
        );
        Ok(())
    }

    pub fn sample(&self, t: f64, truth: Option<&DVector<f64>>) -> BoundSample {
        let (c, r) = self.set.torque_interval();
        let n = c.len();
        BoundSample {
            t,
            torque_center: c.clone(),
            torque_radius: r.clone(),
            means_trace: self.set.means.trace(),
            scale: self.set.scale,
            covered: truth.map(|x| self.set.contains(x)),
            torque_covered: truth.map(|x| (0..n).all(|i| (x[4 * n + i] - c[i]).abs() <= r[i])),
        }
    }
}
