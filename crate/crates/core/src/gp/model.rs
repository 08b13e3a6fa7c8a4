use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::{se_kernel_scaled, Hyperparameters};
use crate::linalg::cholesky_rank_one_update;
use crate::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
/// Incremental updates between full refreshes of the cached `diag(K⁻¹)`.
const REFRESH_EVERY: usize = 1000;

/// Which point leaves the data set when the budget is exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvictionPolicy {
    /// Oldest point first.
    #[default]
    Fifo,
    /// Point with the smallest leave-one-out residual `|α_i| / [K⁻¹]_ii`.
    LeaveOneOut,
}

/// Mean, variance and mean gradient at one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    pub gradient: DVector<f64>,
}

/// Exact zero-mean GP with a squared-exponential kernel.
#[derive(Debug, Clone)]
pub struct GpModel {
    dim: usize,
    hyper: Hyperparameters,
    inv_l2: Vec<f64>,
    /// Row-major `N × dim`.
    inputs: Vec<f64>,
    targets: Vec<f64>,
    /// Lower Cholesky factor of `K + (σ_on² + jitter) I`.
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    inv_diag: DVector<f64>,
    jitter: f64,
    updates: usize,
}

impl GpModel {
    pub fn empty(hyper: Hyperparameters) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            dim: hyper.dim(),
            inv_l2: hyper.inverse_squared_lengthscales(),
            hyper,
            inputs: Vec::new(),
            targets: Vec::new(),
            chol: DMatrix::zeros(0, 0),
            alpha: DVector::zeros(0),
            inv_diag: DVector::zeros(0),
            jitter: 0.0,
            updates: 0,
        })
    }

    /// Batch conditioning on `inputs` (one row per point) and `targets`.
    pub fn condition(
        inputs: &DMatrix<f64>,
        targets: &DVector<f64>,
        hyper: Hyperparameters,
    ) -> Result<Self> {
        let mut m = Self::empty(hyper)?;
        if inputs.ncols() != m.dim {
            return Err(Error::Dimension(format!(
                "inputs have {} columns, kernel expects {}",
                inputs.ncols(),
                m.dim
            )));
        }
        if inputs.nrows() != targets.len() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::Domain("conditioning requires at least one point".into()));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training data"));
        }
        m.inputs = (0..inputs.nrows())
            .flat_map(|i| inputs.row(i).iter().copied().collect::<Vec<_>>())
            .collect();
        m.targets = targets.iter().copied().collect();
        m.refactor()?;
        Ok(m)
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn inputs(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.inputs)
    }

    pub fn targets(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.targets)
    }

    pub fn gram_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Diagonal jitter currently added on top of `σ_on²`.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn sf2(&self) -> f64 {
        self.hyper.sigma_f * self.hyper.sigma_f
    }

    fn noise_diag(&self) -> f64 {
        self.hyper.sigma_on * self.hyper.sigma_on + self.jitter
    }

    fn gram(&self) -> DMatrix<f64> {
        let n = self.len();
        let sf2 = self.sf2();
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = se_kernel_scaled(sf2, &self.inv_l2, self.input(i), self.input(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Full refactorisation under the jitter policy.
    fn refactor(&mut self) -> Result<()> {
        let base = self.gram();
        let s2 = self.hyper.sigma_on * self.hyper.sigma_on;
        let sf2 = self.sf2();
        let mut jitter = 0.0;
        loop {
            let mut k = base.clone();
            for i in 0..k.nrows() {
                k[(i, i)] += s2 + jitter;
            }
            if let Some(c) = k.cholesky() {
                self.chol = c.unpack();
                self.jitter = jitter;
                break;
            }
            jitter = if jitter == 0.0 {
                JITTER_START * sf2
            } else {
                2.0 * jitter
            };
            if jitter > JITTER_MAX * sf2 {
                return Err(Error::Factorization {
                    jitter: JITTER_MAX * sf2,
                });
            }
        }
        self.refresh_alpha();
        self.refresh_inverse_diagonal();
        self.updates = 0;
        Ok(())
    }

    fn refresh_alpha(&mut self) {
        let y = DVector::from_column_slice(&self.targets);
        self.alpha = self.solve(&y);
    }

    /// `(K + σ²I)⁻¹ b` through the factor.
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.chol.solve_lower_triangular_mut(&mut x);
        self.chol.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    fn refresh_inverse_diagonal(&mut self) {
        let n = self.len();
        let mut linv = DMatrix::identity(n, n);
        self.chol.solve_lower_triangular_mut(&mut linv);
        // [K⁻¹]_ii = ‖column i of L⁻¹‖².
        self.inv_diag = DVector::from_fn(n, |i, _| linv.column(i).norm_squared());
    }

    fn kernel_vector(&self, x: &[f64]) -> DVector<f64> {
        let sf2 = self.sf2();
        DVector::from_fn(self.len(), |i, _| {
            se_kernel_scaled(sf2, &self.inv_l2, x, self.input(i))
        })
    }

    fn check_query(&self, x: &[f64]) {
        assert_eq!(x.len(), self.dim, "query dimension mismatch");
    }

    /// Posterior mean only; `O(N ρ)`.
    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.check_query(x);
        let sf2 = self.sf2();
        (0..self.len())
            .map(|i| self.alpha[i] * se_kernel_scaled(sf2, &self.inv_l2, x, self.input(i)))
            .sum()
    }

    /// Posterior mean and variance (clamped to `[0, σ_f²]`).
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v, _) = self.predict_unclamped(x);
        (m, v.clamp(0.0, self.sf2()))
    }

    /// Mean and the variance before clamping.
    pub(crate) fn predict_unclamped(&self, x: &[f64]) -> (f64, f64, DVector<f64>) {
        self.check_query(x);
        if self.is_empty() {
            return (0.0, self.sf2(), DVector::zeros(0));
        }
        let k = self.kernel_vector(x);
        let mean = k.dot(&self.alpha);
        let mut v = k.clone();
        self.chol.solve_lower_triangular_mut(&mut v);
        (mean, self.sf2() - v.norm_squared(), k)
    }

    /// Gradient of the posterior mean with respect to the query.
    pub fn mean_jacobian(&self, x: &[f64]) -> DVector<f64> {
        self.check_query(x);
        let sf2 = self.sf2();
        let mut g = DVector::zeros(self.dim);
        for i in 0..self.len() {
            let xi = self.input(i);
            let w = self.alpha[i] * se_kernel_scaled(sf2, &self.inv_l2, x, xi);
            for d in 0..self.dim {
                g[d] -= w * (x[d] - xi[d]) * self.inv_l2[d];
            }
        }
        g
    }

    /// Mean, variance and gradient with a single kernel evaluation pass.
    pub fn predict_full(&self, x: &[f64]) -> Prediction {
        let (mean, var, k) = self.predict_unclamped(x);
        let mut g = DVector::zeros(self.dim);
        for i in 0..self.len() {
            let xi = self.input(i);
            let w = self.alpha[i] * k[i];
            for d in 0..self.dim {
                g[d] -= w * (x[d] - xi[d]) * self.inv_l2[d];
            }
        }
        Prediction {
            mean,
            variance: var.clamp(0.0, self.sf2()),
            gradient: g,
        }
    }

    /// Gaussian log evidence of the stored data.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let fit: f64 = self
            .targets
            .iter()
            .zip(self.alpha.iter())
            .map(|(y, a)| y * a)
            .sum();
        let logdet: f64 = self.chol.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * fit - logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Copy-on-write append.
    pub fn add_point(&self, x: &[f64], y: f64) -> Result<Self> {
        let mut m = self.clone();
        m.push(x, y)?;
        Ok(m)
    }

    /// Appends a point with an `O(N²)` extension of the Cholesky factor.
    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "point has {} entries, kernel expects {}",
                x.len(),
                self.dim
            )));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training point"));
        }
        let n = self.len();
        let k = self.kernel_vector(x);
        let mut l = k;
        self.chol.solve_lower_triangular_mut(&mut l);
        let d2 = self.sf2() + self.noise_diag() - l.norm_squared();
        self.inputs.extend_from_slice(x);
        self.targets.push(y);
        if d2 <= f64::EPSILON * self.sf2() {
            return self.refactor();
        }
        let d = d2.sqrt();
        let mut chol = DMatrix::zeros(n + 1, n + 1);
        chol.view_mut((0, 0), (n, n)).copy_from(&self.chol);
        for j in 0..n {
            chol[(n, j)] = l[j];
        }
        chol[(n, n)] = d;

        // K⁻¹ of the grown matrix: diag_i += a_i² / d², new entry 1 / d².
        let mut a = l;
        self.chol.tr_solve_lower_triangular_mut(&mut a);
        let mut inv_diag = DVector::zeros(n + 1);
        for i in 0..n {
            inv_diag[i] = self.inv_diag[i] + a[i] * a[i] / d2;
        }
        inv_diag[n] = 1.0 / d2;

        self.chol = chol;
        self.inv_diag = inv_diag;
        self.refresh_alpha();
        self.bump_updates();
        Ok(())
    }

    fn bump_updates(&mut self) {
        self.updates += 1;
        if self.updates >= REFRESH_EVERY {
            self.refresh_inverse_diagonal();
            self.updates = 0;
        }
    }

    /// Removes point `idx`, downdating the factor in `O(N²)`.
    pub fn remove(&mut self, idx: usize) {
        let n = self.len();
        assert!(idx < n, "index {idx} out of range for {n} points");
        let mut e = DVector::zeros(n);
        e[idx] = 1.0;
        let col = self.solve(&e);

        let mut chol = DMatrix::zeros(n - 1, n - 1);
        let tail = n - idx - 1;
        chol.view_mut((0, 0), (idx, idx))
            .copy_from(&self.chol.view((0, 0), (idx, idx)));
        chol.view_mut((idx, 0), (tail, idx))
            .copy_from(&self.chol.view((idx + 1, 0), (tail, idx)));
        let mut l33: DMatrix<f64> = self.chol.view((idx + 1, idx + 1), (tail, tail)).into_owned();
        let mut v: DVector<f64> = self.chol.view((idx + 1, idx), (tail, 1)).column(0).into_owned();
        cholesky_rank_one_update(&mut l33, &mut v);
        chol.view_mut((idx, idx), (tail, tail)).copy_from(&l33);

        let mut inv_diag = DVector::zeros(n - 1);
        let cjj = col[idx];
        for (dst, i) in (0..n).filter(|&i| i != idx).enumerate() {
            inv_diag[dst] = self.inv_diag[i] - col[i] * col[i] / cjj;
        }

        self.chol = chol;
        self.inv_diag = inv_diag;
        self.inputs.drain(idx * self.dim..(idx + 1) * self.dim);
        self.targets.remove(idx);
        self.refresh_alpha();
        self.bump_updates();
    }

    /// Leave-one-out residuals `α_i / [K⁻¹]_ii`.
    pub fn loo_residuals(&self) -> DVector<f64> {
        self.alpha.component_div(&self.inv_diag)
    }

    pub(crate) fn eviction_index(&self, policy: EvictionPolicy) -> usize {
        match policy {
            EvictionPolicy::Fifo => 0,
            EvictionPolicy::LeaveOneOut => argmin_abs(&self.loo_residuals()),
        }
    }

    /// Evicts points until at most `budget` remain.
    pub fn evict_to_budget(&mut self, budget: usize, policy: EvictionPolicy) {
        while self.len() > budget {
            let idx = self.eviction_index(policy);
            self.remove(idx);
        }
    }

    /// Copy-on-write form of [`GpModel::evict_to_budget`].
    pub fn budget_evict(&self, budget: usize, policy: EvictionPolicy) -> Self {
        let mut m = self.clone();
        m.evict_to_budget(budget, policy);
        m
    }

    /// Reconditions the same data under new hyperparameters.
    pub fn with_hyperparameters(&self, hyper: Hyperparameters) -> Result<Self> {
        if self.is_empty() {
            return Self::empty(hyper);
        }
        Self::condition(&self.inputs(), &self.targets(), hyper)
    }
}

pub(crate) fn argmin_abs(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() < v[best].abs() {
            best = i;
        }
    }
    best
}
