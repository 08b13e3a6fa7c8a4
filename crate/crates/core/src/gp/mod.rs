//! Exact Gaussian-process regression with a squared-exponential kernel.

mod dataset;
mod hyperopt;
mod kernel;
mod model;
mod multi;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::HiddenResidual;

pub use dataset::TrainingSet;
pub use hyperopt::{
    heuristic_hyperparameters, lml_with_gradient, optimize_hyperparameters, OptimizationResult,
    OptimizerConfig,
};
pub use kernel::{se_kernel, Hyperparameters};
pub use model::{EvictionPolicy, GpModel, Prediction};
pub use multi::MultiGp;

/// Residual mean, variance and mean Jacobian at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPrediction {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    /// `n × ρ`.
    pub jacobian: DMatrix<f64>,
}

impl ResidualPrediction {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            mean: DVector::zeros(n),
            variance: DVector::zeros(n),
            jacobian: DMatrix::zeros(n, dim),
        }
    }
}

/// Anything that predicts the lumped residual torque from `z = [q, q̇, q̈]`.
pub trait ResidualModel: Sync {
    fn outputs(&self) -> usize;
    fn predict_mean(&self, z: &DVector<f64>) -> DVector<f64>;
    fn predict(&self, z: &DVector<f64>) -> ResidualPrediction;
}

/// Zero mean, zero variance: turns the GP-enhanced filter into the plain AKF.
#[derive(Debug, Clone, Copy)]
pub struct NoResidual {
    pub joints: usize,
}

impl ResidualModel for NoResidual {
    fn outputs(&self) -> usize {
        self.joints
    }

    fn predict_mean(&self, _z: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.joints)
    }

    fn predict(&self, z: &DVector<f64>) -> ResidualPrediction {
        ResidualPrediction::zeros(self.joints, z.len())
    }
}

/// The true residual of a simulated plant, with zero variance.
impl ResidualModel for HiddenResidual {
    fn outputs(&self) -> usize {
        self.friction.coulomb.len()
    }

    fn predict_mean(&self, z: &DVector<f64>) -> DVector<f64> {
        self.residual_z(z)
    }

    fn predict(&self, z: &DVector<f64>) -> ResidualPrediction {
        ResidualPrediction {
            mean: self.residual_z(z),
            variance: DVector::zeros(self.outputs()),
            jacobian: self.jacobian_z(z),
        }
    }
}

#[cfg(test)]
mod tests;
