use nalgebra::{DMatrix, DVector};

use crate::linalg::{is_symmetric, min_eigenvalue};
use crate::{Error, Result};

/// Per-joint measurement noise variances for `[θ_m, θ_s, θ̇_m, θ̇_s]`.
pub const PAPER_MEASUREMENT_NOISE: [f64; 4] = [0.0461, 3.6e-6, 0.1288, 1.01e-5];
/// Per-joint nominal process noise for `[θ_m, θ_s, θ̇_m, θ̇_s, τ_act]`.
pub const PAPER_PROCESS_NOISE: [f64; 5] = [1e-1, 1e3, 1e2, 1e-9, 1e-2];
/// Initial variance of the unmeasured torque block [N²m²].
pub const DEFAULT_TORQUE_PRIOR_VARIANCE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Continuous-time nominal process noise; discretised as `Q·dt`.
    pub q_nom: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub dt: f64,
    pub x0: DVector<f64>,
    pub p0: DMatrix<f64>,
    /// Joseph-form covariance update.
    pub joseph: bool,
}

/// Expands per-block values into a diagonal over `blocks × n` entries.
fn block_diagonal(values: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        values.len() * n,
        values.iter().flat_map(|&v| std::iter::repeat(v).take(n)),
    ))
}

/// `[I_4n 0]`: every state except the active torque is measured.
pub fn encoder_observation(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(4 * n, 5 * n, |i, j| if i == j { 1.0 } else { 0.0 })
}

impl FilterConfig {
    /// Diagonal noise model from per-block values; `x0` from the first measurement.
    pub fn from_diagonals(
        n: usize,
        dt: f64,
        measurement: &[f64; 4],
        process: &[f64; 5],
        torque_prior: f64,
        y0: &DVector<f64>,
    ) -> Result<Self> {
        if y0.len() != 4 * n {
            return Err(Error::Dimension(format!("first measurement has {} entries, expected {}", y0.len(), 4 * n)));
        }
        let r = block_diagonal(measurement, n);
        let mut p0 = DMatrix::zeros(5 * n, 5 * n);
        p0.view_mut((0, 0), (4 * n, 4 * n)).copy_from(&r);
        for i in 4 * n..5 * n {
            p0[(i, i)] = torque_prior;
        }
        let mut x0 = DVector::zeros(5 * n);
        x0.rows_mut(0, 4 * n).copy_from(y0);
        let cfg = Self {
            q_nom: block_diagonal(process, n),
            r,
            h: encoder_observation(n),
            dt,
            x0,
            p0,
            joseph: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn paper_defaults(n: usize, dt: f64, y0: &DVector<f64>) -> Result<Self> {
        Self::from_diagonals(
            n,
            dt,
            &PAPER_MEASUREMENT_NOISE,
            &PAPER_PROCESS_NOISE,
            DEFAULT_TORQUE_PRIOR_VARIANCE,
            y0,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.x0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.x0.len();
        let m = self.r.nrows();
        let bad = |s: &str| Err(Error::Config(s.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("filter step must be positive");
        }
        if self.q_nom.shape() != (d, d) || self.p0.shape() != (d, d) {
            return Err(Error::Dimension(format!("Q and P0 must be {d}×{d}")));
        }
        if self.r.shape() != (m, m) || self.h.shape() != (m, d) {
            return Err(Error::Dimension(format!("R must be {m}×{m} and H {m}×{d}")));
        }
        for (name, mat) in [("Q_nom", &self.q_nom), ("P0", &self.p0), ("R", &self.r)] {
            if !is_symmetric(mat, 1e-12) {
                return Err(Error::Config(format!("{name} is not symmetric")));
            }
            if min_eigenvalue(mat) < -1e-12 {
                return Err(Error::Config(format!("{name} is not positive semidefinite")));
            }
        }
        if self.r.clone().cholesky().is_none() {
            return bad("R must be positive definite");
        }
        if self.h.rank(1e-10) != m {
            return bad("H must have full row rank");
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state"));
        }
        Ok(())
    }
}

/// Posterior after `k` steps plus the residual prediction used last.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub k: u64,
    pub residual_mean: DVector<f64>,
    pub residual_var: DVector<f64>,
}

impl FilterState {
    pub fn initial(cfg: &FilterConfig) -> Self {
        let n = cfg.state_dim() / 5;
        Self {
            x: cfg.x0.clone(),
            p: cfg.p0.clone(),
            k: 0,
            residual_mean: DVector::zeros(n),
            residual_var: DVector::zeros(n),
        }
    }

    pub fn torque(&self) -> DVector<f64> {
        let n = self.x.len() / 5;
        self.x.rows(4 * n, n).into_owned()
    }

    pub fn torque_variance(&self) -> DVector<f64> {
        let n = self.x.len() / 5;
        DVector::from_fn(n, |i, _| self.p[(4 * n + i, 4 * n + i)])
    }
}

/// Everything one filter step computed.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub u: DVector<f64>,
    pub prior_x: DVector<f64>,
    pub prior_p: DMatrix<f64>,
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub residual_mean: DVector<f64>,
    pub residual_var: DVector<f64>,
    /// Discrete transition Jacobian used for the covariance.
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    /// Load acceleration the GP was fed, when it came from measurements.
    pub measured_acceleration: Option<DVector<f64>>,
}
