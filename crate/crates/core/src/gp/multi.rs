use nalgebra::{DMatrix, DVector};

use super::kernel::Hyperparameters;
use super::model::{argmin_abs, EvictionPolicy, GpModel};
use super::{ResidualModel, ResidualPrediction};
use crate::{Error, Result};

/// Independent GPs, one per output, over a shared input set.
#[derive(Debug, Clone)]
pub struct MultiGp {
    models: Vec<GpModel>,
    budget: Option<usize>,
    policy: EvictionPolicy,
}

impl MultiGp {
    pub fn new(
        hypers: Vec<Hyperparameters>,
        budget: Option<usize>,
        policy: EvictionPolicy,
    ) -> Result<Self> {
        if hypers.is_empty() {
            return Err(Error::Config("at least one output is required".into()));
        }
        let dim = hypers[0].dim();
        if hypers.iter().any(|h| h.dim() != dim) {
            return Err(Error::Dimension("all outputs must share the input dimension".into()));
        }
        if budget == Some(0) {
            return Err(Error::Config("data budget must be at least 1".into()));
        }
        Ok(Self {
            models: hypers.into_iter().map(GpModel::empty).collect::<Result<_>>()?,
            budget,
            policy,
        })
    }

    /// Batch conditioning; `targets` has one column per output.
    pub fn condition(
        inputs: &DMatrix<f64>,
        targets: &DMatrix<f64>,
        hypers: Vec<Hyperparameters>,
        budget: Option<usize>,
        policy: EvictionPolicy,
    ) -> Result<Self> {
        if targets.ncols() != hypers.len() {
            return Err(Error::Dimension(format!(
                "{} target columns for {} outputs",
                targets.ncols(),
                hypers.len()
            )));
        }
        let mut m = Self::new(hypers, budget, policy)?;
        for (j, model) in m.models.iter_mut().enumerate() {
            *model = GpModel::condition(inputs, &targets.column(j).into_owned(), model.hyper().clone())?;
        }
        m.enforce_budget();
        Ok(m)
    }

    pub fn models(&self) -> &[GpModel] {
        &self.models
    }

    pub fn outputs(&self) -> usize {
        self.models.len()
    }

    pub fn input_dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn len(&self) -> usize {
        self.models[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    pub fn policy(&self) -> EvictionPolicy {
        self.policy
    }

    pub fn hyperparameters(&self) -> Vec<Hyperparameters> {
        self.models.iter().map(|m| m.hyper().clone()).collect()
    }

    /// Appends one sample to every output, then evicts down to the budget.
    pub fn push(&mut self, z: &[f64], y: &[f64]) -> Result<()> {
        if y.len() != self.outputs() {
            return Err(Error::Dimension(format!(
                "{} targets for {} outputs",
                y.len(),
                self.outputs()
            )));
        }
        for (m, &yi) in self.models.iter_mut().zip(y) {
            m.push(z, yi)?;
        }
        self.enforce_budget();
        Ok(())
    }

    pub fn add_point(&self, z: &[f64], y: &[f64]) -> Result<Self> {
        let mut m = self.clone();
        m.push(z, y)?;
        Ok(m)
    }

    fn enforce_budget(&mut self) {
        let Some(b) = self.budget else { return };
        while self.len() > b {
            let idx = self.eviction_index();
            for m in &mut self.models {
                m.remove(idx);
            }
        }
    }

    fn eviction_index(&self) -> usize {
        match self.policy {
            EvictionPolicy::Fifo => 0,
            EvictionPolicy::LeaveOneOut => {
                // Joint score: LOO residuals normalised by each output's signal level.
                let mut score = DVector::zeros(self.len());
                for m in &self.models {
                    let r = m.loo_residuals() / m.hyper().sigma_f;
                    score += r.map(|v| v * v);
                }
                argmin_abs(&score)
            }
        }
    }

    pub fn with_hyperparameters(&self, hypers: Vec<Hyperparameters>) -> Result<Self> {
        if hypers.len() != self.outputs() {
            return Err(Error::Dimension("one hyperparameter set per output".into()));
        }
        let models = self
            .models
            .iter()
            .zip(hypers)
            .map(|(m, h)| m.with_hyperparameters(h))
            .collect::<Result<_>>()?;
        Ok(Self {
            models,
            budget: self.budget,
            policy: self.policy,
        })
    }

    pub fn inputs(&self) -> DMatrix<f64> {
        self.models[0].inputs()
    }

    pub fn targets(&self) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.models.iter().map(|m| m.targets()).collect();
        DMatrix::from_columns(&cols)
    }

    pub fn predict(&self, z: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let mut mu = DVector::zeros(self.outputs());
        let mut var = DVector::zeros(self.outputs());
        for (i, m) in self.models.iter().enumerate() {
            (mu[i], var[i]) = m.predict(z);
        }
        (mu, var)
    }

    /// `n × ρ` Jacobian of the stacked means.
    pub fn mean_jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.outputs(), self.input_dim());
        for (i, m) in self.models.iter().enumerate() {
            j.set_row(i, &m.mean_jacobian(z).transpose());
        }
        j
    }
}

impl ResidualModel for MultiGp {
    fn outputs(&self) -> usize {
        self.models.len()
    }

    fn predict_mean(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.models.len(),
            self.models.iter().map(|m| m.predict_mean(z.as_slice())),
        )
    }

    fn predict(&self, z: &DVector<f64>) -> ResidualPrediction {
        let n = self.models.len();
        let mut out = ResidualPrediction::zeros(n, self.input_dim());
        for (i, m) in self.models.iter().enumerate() {
            let p = m.predict_full(z.as_slice());
            out.mean[i] = p.mean;
            out.variance[i] = p.variance;
            out.jacobian.set_row(i, &p.gradient.transpose());
        }
        out
    }
}
