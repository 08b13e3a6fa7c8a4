use nalgebra::{DMatrix, DVector};

use super::config::{FilterConfig, FilterState, StepRecord};
use super::ekf::{ekf_predict, ekf_update, DiscreteModel};
use crate::dynamics::{
    discretize_jacobian, discretize_step, nominal_jacobian, reconstruct_z, residual_input_map,
    spring_torque, z_jacobian, SeaParams,
};
use crate::gp::{NoResidual, ResidualModel, ResidualPrediction};
use crate::Result;

/// Nominal model corrected by a residual prediction frozen over one step.
#[derive(Debug, Clone)]
pub struct AugmentedModel<'a> {
    pub params: &'a SeaParams,
    pub dt: f64,
    pub residual: ResidualPrediction,
    /// The GP's acceleration input came from measurements, not from the state.
    pub measured_acceleration: bool,
}

impl AugmentedModel<'_> {
    /// `F_nom − I_μ M⁻¹ ∂μ/∂x`, with `∂z/∂x` taken from the nominal rows.
    pub fn continuous_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.params.joints();
        let f_nom = nominal_jacobian(self.params, x, u)?;
        if self.residual.jacobian.amax() == 0.0 {
            return Ok(f_nom);
        }
        let q = x.rows(0, n) + x.rows(n, n);
        let g = residual_input_map(self.params, &q)?;
        let mut dz = z_jacobian(n, &f_nom);
        if self.measured_acceleration {
            dz.rows_mut(2 * n, n).fill(0.0);
        }
        let f_gp = &self.residual.jacobian * dz;
        Ok(f_nom - g * f_gp)
    }
}

impl DiscreteModel for AugmentedModel<'_> {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        discretize_step(self.params, x, u, &self.residual.mean, self.dt)
    }

    fn jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(discretize_jacobian(&self.continuous_jacobian(x, u)?, self.dt))
    }
}

/// One GP-enhanced filter step driven by motor torque `u` and measurement `y`.
///
/// The acceleration fed to the GP is rebuilt from the model and last step's
/// residual mean.
pub fn gp_akf_step(
    cfg: &FilterConfig,
    fs: &FilterState,
    u: &DVector<f64>,
    y: &DVector<f64>,
    params: &SeaParams,
    residual: &dyn ResidualModel,
) -> Result<(FilterState, StepRecord)> {
    step_with(cfg, fs, u, y, params, residual, None)
}

/// Like [`gp_akf_step`], but the GP sees the measured load acceleration
/// `q_ddot` (at the previous sample) instead of the model-based one.
///
/// The model-based acceleration closes a loop through the residual mean.
/// When the learned residual is steeper in q̈ than the load inertia, that
/// loop diverges; measured accelerations keep the GP input on the data.
pub fn gp_akf_step_measured(
    cfg: &FilterConfig,
    fs: &FilterState,
    u: &DVector<f64>,
    y: &DVector<f64>,
    params: &SeaParams,
    residual: &dyn ResidualModel,
    q_ddot: &DVector<f64>,
) -> Result<(FilterState, StepRecord)> {
    if q_ddot.len() != params.joints() {
        return Err(crate::Error::Dimension(format!(
            "measured acceleration has {} entries, expected {}",
            q_ddot.len(),
            params.joints()
        )));
    }
    step_with(cfg, fs, u, y, params, residual, Some(q_ddot))
}

fn step_with(
    cfg: &FilterConfig,
    fs: &FilterState,
    u: &DVector<f64>,
    y: &DVector<f64>,
    params: &SeaParams,
    residual: &dyn ResidualModel,
    q_ddot: Option<&DVector<f64>>,
) -> Result<(FilterState, StepRecord)> {
    let n = params.joints();
    let mut z = reconstruct_z(params, &fs.x, u, &fs.residual_mean)?;
    if let Some(a) = q_ddot {
        z.rows_mut(2 * n, n).copy_from(a);
    }
    let pred = residual.predict(&z);
    let q = fs.x.rows(0, n) + fs.x.rows(n, n);
    let g = residual_input_map(params, &q)?;
    let q_cont = &cfg.q_nom + &g * DMatrix::from_diagonal(&pred.variance) * g.transpose();
    let q_d = q_cont * cfg.dt;
    let model = AugmentedModel {
        params,
        dt: cfg.dt,
        residual: pred,
        measured_acceleration: q_ddot.is_some(),
    };
    let prior = ekf_predict(fs, u, &model, &q_d)?;
    let post = ekf_update(cfg, &prior, y)?;
    let next = FilterState {
        x: post.x.clone(),
        p: post.p.clone(),
        k: fs.k + 1,
        residual_mean: model.residual.mean.clone(),
        residual_var: model.residual.variance.clone(),
    };
    let record = StepRecord {
        t: next.k as f64 * cfg.dt,
        u: u.clone(),
        prior_x: prior.x,
        prior_p: prior.p,
        x: post.x,
        p: post.p,
        gain: post.gain,
        innovation: post.innovation,
        residual_mean: model.residual.mean,
        residual_var: model.residual.variance,
        transition: prior.transition,
        process_noise: q_d,
        measured_acceleration: q_ddot.cloned(),
    };
    Ok((next, record))
}

/// The plain augmented-state filter: no residual model.
pub fn akf_step(
    cfg: &FilterConfig,
    fs: &FilterState,
    u: &DVector<f64>,
    y: &DVector<f64>,
    params: &SeaParams,
) -> Result<(FilterState, StepRecord)> {
    gp_akf_step(cfg, fs, u, y, params, &NoResidual { joints: params.joints() })
}

/// Spring torque read as the interaction torque estimate.
pub fn spring_torque_estimate(
    params: &SeaParams,
    theta_s: &DVector<f64>,
    theta_s_dot: &DVector<f64>,
) -> DVector<f64> {
    spring_torque(params, theta_s, theta_s_dot)
}
