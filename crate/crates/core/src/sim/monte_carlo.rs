//! Replicated estimation runs on one trained model.
//!
//! Training and the estimation-phase plant run once with the master seed. Run
//! `r` then draws fresh measurement noise from seed `master + r` and
//! re-runs every estimator, so run 0 reproduces [`full_run`](super::full_run).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::metrics::RunMetrics;
use super::run::{estimate, simulate_estimation, train, EstimationOutput, Estimator};
use super::scenario::Scenario;
use crate::{Error, Result};

/// Metrics of one replication plus the raw bound counts used for pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub run: usize,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub covered: usize,
    pub torque_covered: usize,
    pub bound_steps: usize,
}

impl McRun {
    fn from_output(run: usize, seed: u64, out: &EstimationOutput) -> Self {
        let count = |f: fn(&crate::bounds::BoundSample) -> Option<bool>| {
            out.bounds.iter().filter(|b| f(b) == Some(true)).count()
        };
        Self {
            run,
            seed,
            metrics: out.metrics.clone(),
            covered: count(|b| b.covered),
            torque_covered: count(|b| b.torque_covered),
            bound_steps: out.bounds.len(),
        }
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub scenario: String,
    pub master_seed: u64,
    pub runs: Vec<McRun>,
    pub rmse: BTreeMap<Estimator, MeanStd>,
    /// Covered steps over all bound steps of all runs.
    pub pooled_coverage: Option<f64>,
    pub pooled_torque_coverage: Option<f64>,
    pub mean_torque_radius: Option<f64>,
    pub bound_steps: usize,
}

impl McSummary {
    fn aggregate(scenario: String, master_seed: u64, runs: Vec<McRun>) -> Self {
        let mut rmse = BTreeMap::new();
        if let Some(first) = runs.first() {
            for e in first.metrics.rmse.keys() {
                let v: Vec<f64> = runs.iter().map(|r| r.metrics.rmse[e]).collect();
                rmse.insert(*e, MeanStd::of(&v));
            }
        }
        let steps: usize = runs.iter().map(|r| r.bound_steps).sum();
        let pooled = |f: fn(&McRun) -> usize| {
            (steps > 0).then(|| runs.iter().map(f).sum::<usize>() as f64 / steps as f64)
        };
        let radii: Vec<f64> = runs.iter().filter_map(|r| r.metrics.mean_torque_radius).collect();
        Self {
            pooled_coverage: pooled(|r| r.covered),
            pooled_torque_coverage: pooled(|r| r.torque_covered),
            mean_torque_radius: (!radii.is_empty()).then(|| MeanStd::of(&radii).mean),
            bound_steps: steps,
            rmse,
            scenario,
            master_seed,
            runs,
        }
    }
}

/// Lower one-sided normal-approximation margin for a coverage rate `p`
/// estimated from `n` Bernoulli trials at the given confidence (0.99 → z = 2.326).
pub fn binomial_margin(p: f64, n: usize, z: f64) -> f64 {
    z * (p * (1.0 - p) / n as f64).sqrt()
}

/// Runs `runs` replications on `jobs` worker threads (`0` lets the pool decide).
/// The result does not depend on `jobs`.
pub fn monte_carlo(
    sc: &Scenario,
    runs: usize,
    master_seed: u64,
    estimators: &[Estimator],
    jobs: usize,
) -> Result<McSummary> {
    if runs == 0 {
        return Err(Error::Config("monte carlo needs at least one run".into()));
    }
    let trained = train(sc, master_seed)?;
    let logs = simulate_estimation(sc, &trained.cursor)?;
    let one = |r: usize| -> Result<McRun> {
        let seed = master_seed.wrapping_add(r as u64);
        let out = estimate(sc, &logs, &trained.gp, estimators, seed)?;
        Ok(McRun::from_output(r, seed, &out))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    let results: Vec<McRun> = pool.install(|| (0..runs).into_par_iter().map(one).collect::<Result<_>>())?;
    Ok(McSummary::aggregate(sc.name.clone(), master_seed, results))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Writes `<scenario>_montecarlo_<seed>.csv` (one row per run) and
/// `<scenario>_montecarlo_summary_<seed>.csv` (aggregates).
pub fn write_monte_carlo(dir: &Path, s: &McSummary) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let io = |p: &Path, e: csv::Error| Error::Io(format!("{}: {e}", p.display()));
    let estimators: Vec<Estimator> = s.rmse.keys().copied().collect();

    let runs_path = dir.join(format!("{}_montecarlo_{}.csv", s.scenario, s.master_seed));
    let mut w = csv::Writer::from_path(&runs_path).map_err(|e| io(&runs_path, e))?;
    let mut header = vec!["run".to_string(), "seed".to_string()];
    header.extend(estimators.iter().map(|e| format!("rmse_{}", e.tag())));
    header.extend(["coverage", "torque_coverage", "mean_torque_radius", "steps"].map(String::from));
    w.write_record(&header).map_err(|e| io(&runs_path, e))?;
    for r in &s.runs {
        let mut rec = vec![r.run.to_string(), r.seed.to_string()];
        rec.extend(estimators.iter().map(|e| format!("{:e}", r.metrics.rmse[e])));
        rec.push(cell(r.metrics.coverage_rate));
        rec.push(cell(r.metrics.torque_coverage_rate));
        rec.push(cell(r.metrics.mean_torque_radius));
        rec.push(r.metrics.steps.to_string());
        w.write_record(&rec).map_err(|e| io(&runs_path, e))?;
    }
    w.flush()?;

    let sum_path = dir.join(format!("{}_montecarlo_summary_{}.csv", s.scenario, s.master_seed));
    let mut w = csv::Writer::from_path(&sum_path).map_err(|e| io(&sum_path, e))?;
    w.write_record(["quantity", "value"]).map_err(|e| io(&sum_path, e))?;
    let mut rows = vec![("runs".to_string(), s.runs.len().to_string())];
    for (e, ms) in &s.rmse {
        rows.push((format!("rmse_{}_mean", e.tag()), format!("{:e}", ms.mean)));
        rows.push((format!("rmse_{}_std", e.tag()), format!("{:e}", ms.std)));
    }
    rows.push(("pooled_coverage".into(), cell(s.pooled_coverage)));
    rows.push(("pooled_torque_coverage".into(), cell(s.pooled_torque_coverage)));
    rows.push(("mean_torque_radius".into(), cell(s.mean_torque_radius)));
    rows.push(("bound_steps".into(), s.bound_steps.to_string()));
    for (k, v) in rows {
        w.write_record([k, v]).map_err(|e| io(&sum_path, e))?;
    }
    w.flush()?;
    Ok(vec![runs_path, sum_path])
}
