//! GP-enhanced augmented-state Kalman filtering for robots with series elastic
//! actuators.
//!
//! The crate is organised along the data flow of the estimator:
//!
//! * [`dynamics`] holds the SEA model: spring law, load/motor equations, the
//!   augmented-state nominal dynamics with its Jacobian, the inverse-dynamics
//!   residual used as a GP training target and a ground-truth plant.
//! * [`gp`] is exact Gaussian process regression with a squared-exponential
//!   kernel, incremental conditioning under a data budget and
//!   log-likelihood hyperparameter fitting.
//! * [`estimators`] contains the generic EKF, the augmented-state filter with
//!   and without the learned residual, and the spring-torque baseline.
//! * [`bounds`] implements the ellipsoidal set-membership machinery that turns
//!   the GP error bound into a guaranteed confidence region for the filter.
//! * [`sim`] re-creates the passive-tracking and static-resistance experiments
//!   on a simulated plant, including Monte-Carlo batching and CSV export.

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod gp;
pub(crate) mod linalg;
pub mod sim;

pub use error::{Error, Result};
