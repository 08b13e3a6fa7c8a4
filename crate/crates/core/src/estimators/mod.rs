//! Extended Kalman filtering for the augmented SEA state.
//!
//! The plain augmented-state filter (AKF) models the unknown active torque as
//! a random walk on top of the nominal dynamics. The GP-enhanced variant adds
//! the learned residual mean to the prediction, its Jacobian to the
//! linearisation and its variance to the process noise.

mod akf;
mod config;
mod ekf;

pub use akf::{akf_step, gp_akf_step, gp_akf_step_measured, spring_torque_estimate, AugmentedModel};
pub use config::{
    encoder_observation, FilterConfig, FilterState, StepRecord, DEFAULT_TORQUE_PRIOR_VARIANCE,
    PAPER_MEASUREMENT_NOISE, PAPER_PROCESS_NOISE,
};
pub use ekf::{ekf_predict, ekf_update, DiscreteModel, LinearModel, Posterior, Prior};
