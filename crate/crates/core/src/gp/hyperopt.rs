use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::kernel::{se_kernel_scaled, Hyperparameters};
use crate::{Error, Result};

/// Multi-start Adam ascent on the log evidence in log-parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Evenly spaced subsample size; `0` uses every point.
    pub max_points: usize,
    pub seed: u64,
    pub min_noise: f64,
    pub min_lengthscale: f64,
    pub max_lengthscale: f64,
    /// Stop a restart once the gradient norm falls below this.
    pub tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            iterations: 200,
            learning_rate: 0.05,
            max_points: 200,
            seed: 0,
            min_noise: 1e-4,
            min_lengthscale: 1e-3,
            max_lengthscale: 1e3,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub hyper: Hyperparameters,
    pub lml: f64,
    pub initial_lml: f64,
    /// False when no restart produced a finite objective and `init` was returned.
    pub converged: bool,
}

/// Log evidence and its gradient with respect to
/// `[ln σ_f, ln l₁, …, ln l_ρ, ln σ_on]`.
pub fn lml_with_gradient(
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    hyper: &Hyperparameters,
) -> Result<(f64, DVector<f64>)> {
    let n = inputs.nrows();
    let rho = inputs.ncols();
    if rho != hyper.dim() || targets.len() != n {
        return Err(Error::Dimension("inputs, targets and hyperparameters disagree".into()));
    }
    let sf2 = hyper.sigma_f * hyper.sigma_f;
    let sn2 = hyper.sigma_on * hyper.sigma_on;
    let inv_l2 = hyper.inverse_squared_lengthscales();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| inputs.row(i).iter().copied().collect()).collect();
    let mut kf = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = se_kernel_scaled(sf2, &inv_l2, &rows[i], &rows[j]);
            kf[(i, j)] = v;
            kf[(j, i)] = v;
        }
    }
    let mut k = kf.clone();
    for i in 0..n {
        k[(i, i)] += sn2;
    }
    let chol = k.cholesky().ok_or(Error::Factorization { jitter: 0.0 })?;
    let alpha = chol.solve(targets);
    let kinv = chol.inverse();
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let lml = -0.5 * targets.dot(&alpha) - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // W = α αᵀ − K⁻¹; ∂L/∂θ = ½ tr(W ∂K/∂θ).
    let w = &alpha * alpha.transpose() - kinv;
    let mut grad = DVector::zeros(rho + 2);
    let mut g_sf = 0.0;
    let mut g_l = vec![0.0; rho];
    for j in 0..n {
        for i in 0..n {
            let wk = w[(i, j)] * kf[(i, j)];
            g_sf += wk;
            for d in 0..rho {
                let diff = rows[i][d] - rows[j][d];
                g_l[d] += wk * diff * diff * inv_l2[d];
            }
        }
    }
    grad[0] = g_sf; // ½ · 2
    for d in 0..rho {
        grad[1 + d] = 0.5 * g_l[d];
    }
    grad[rho + 1] = sn2 * w.trace(); // ½ · 2σ²
    Ok((lml, grad))
}

fn subsample(inputs: &DMatrix<f64>, targets: &DVector<f64>, max: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n = inputs.nrows();
    if max == 0 || n <= max {
        return (inputs.clone(), targets.clone());
    }
    let idx: Vec<usize> = (0..max).map(|i| i * n / max).collect();
    let x = DMatrix::from_fn(max, inputs.ncols(), |i, j| inputs[(idx[i], j)]);
    let y = DVector::from_fn(max, |i, _| targets[idx[i]]);
    (x, y)
}

fn clamp_log(p: &mut [f64], cfg: &OptimizerConfig) {
    let d = p.len() - 2;
    p[0] = p[0].clamp(-12.0, 12.0);
    for v in &mut p[1..=d] {
        *v = v.clamp(cfg.min_lengthscale.ln(), cfg.max_lengthscale.ln());
    }
    p[d + 1] = p[d + 1].clamp(cfg.min_noise.ln(), 12.0);
}

/// Returns the best of `cfg.restarts` Adam runs, the first started at `init`.
pub fn optimize_hyperparameters(
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    init: &Hyperparameters,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    init.validate()?;
    if inputs.nrows() < 2 {
        return Err(Error::Domain("hyperparameter optimisation needs at least two points".into()));
    }
    let (x, y) = subsample(inputs, targets, cfg.max_points);
    let initial_lml = lml_with_gradient(&x, &y, init).map(|r| r.0).unwrap_or(f64::NEG_INFINITY);
    let mut best: Option<(f64, Vec<f64>)> = initial_lml
        .is_finite()
        .then(|| (initial_lml, init.to_log()));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    for restart in 0..cfg.restarts.max(1) {
        let mut p = init.to_log();
        if restart > 0 {
            for v in p.iter_mut() {
                *v += jitter.sample(&mut rng);
            }
        }
        clamp_log(&mut p, cfg);
        let (mut m, mut v) = (vec![0.0; p.len()], vec![0.0; p.len()]);
        let (b1, b2) = (0.9f64, 0.999f64);
        for it in 1..=cfg.iterations {
            let h = Hyperparameters::from_log(&p);
            let Ok((lml, g)) = lml_with_gradient(&x, &y, &h) else {
                break;
            };
            if !lml.is_finite() || g.iter().any(|v| !v.is_finite()) {
                break;
            }
            if best.as_ref().map_or(true, |b| lml > b.0) {
                best = Some((lml, p.clone()));
            }
            if g.norm() < cfg.tolerance {
                break;
            }
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powi(it as i32));
                let vh = v[i] / (1.0 - b2.powi(it as i32));
                p[i] += cfg.learning_rate * mh / (vh.sqrt() + 1e-8);
            }
            clamp_log(&mut p, cfg);
        }
        // Score the final iterate too.
        if let Ok((lml, _)) = lml_with_gradient(&x, &y, &Hyperparameters::from_log(&p)) {
            if lml.is_finite() && best.as_ref().map_or(true, |b| lml > b.0) {
                best = Some((lml, p.clone()));
            }
        }
    }

    Ok(match best {
        Some((lml, p)) => OptimizationResult {
            hyper: Hyperparameters::from_log(&p),
            lml,
            initial_lml,
            converged: true,
        },
        None => {
            log::warn!("hyperparameter optimisation failed on every restart; keeping the initial values");
            OptimizationResult {
                hyper: init.clone(),
                lml: initial_lml,
                initial_lml,
                converged: false,
            }
        }
    })
}

/// Data-driven starting point: `σ_f = std(y)`, `l_d = std(x_d)`, `σ_on = 0.1 σ_f`.
pub fn heuristic_hyperparameters(inputs: &DMatrix<f64>, targets: &DVector<f64>) -> Hyperparameters {
    fn std(v: impl Iterator<Item = f64> + Clone) -> f64 {
        let n = v.clone().count().max(1) as f64;
        let mean = v.clone().sum::<f64>() / n;
        (v.map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
    let sf = std(targets.iter().copied()).max(1e-3);
    let ls = (0..inputs.ncols())
        .map(|d| std(inputs.column(d).iter().copied()).max(1e-2))
        .collect();
    Hyperparameters {
        sigma_f: sf,
        lengthscales: ls,
        sigma_on: 0.1 * sf,
    }
}
