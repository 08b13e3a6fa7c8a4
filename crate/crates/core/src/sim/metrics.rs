use std::collections::BTreeMap;

use super::run::{EstimateRow, Estimator};
use crate::bounds::BoundSample;

/// Per-run summary of estimation quality.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub rmse: BTreeMap<Estimator, f64>,
    /// Fraction of steps with the true augmented state inside the confidence set.
    pub coverage_rate: Option<f64>,
    /// Fraction of steps with every true torque inside its interval.
    pub torque_coverage_rate: Option<f64>,
    /// Mean torque-bound radius over steps and joints [N·m].
    pub mean_torque_radius: Option<f64>,
    pub steps: usize,
}

/// Root-mean-square torque error pooled over steps and joints.
pub fn rmse(rows: &[EstimateRow]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in rows {
        for (h, t) in r.tau_hat.iter().zip(r.tau_true.iter()) {
            sum += (h - t) * (h - t);
            count += 1;
        }
    }
    if count == 0 {
        return f64::NAN;
    }
    (sum / count as f64).sqrt()
}

/// Mean signed error `τ̂ − τ`, pooled over steps and joints.
pub fn mean_offset(rows: &[EstimateRow]) -> f64 {
    let (s, c) = rows.iter().fold((0.0, 0usize), |(s, c), r| {
        (s + (&r.tau_hat - &r.tau_true).sum(), c + r.tau_hat.len())
    });
    s / c as f64
}

fn rate(flags: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        let f = f?;
        total += 1;
        hit += f as usize;
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

impl RunMetrics {
    pub fn compute(traces: &BTreeMap<Estimator, Vec<EstimateRow>>, bounds: &[BoundSample]) -> Self {
        let radius = if bounds.is_empty() {
            None
        } else {
            let (s, c) = bounds.iter().fold((0.0, 0usize), |(s, c), b| {
                (s + b.torque_radius.sum(), c + b.torque_radius.len())
            });
            Some(s / c as f64)
        };
        Self {
            rmse: traces.iter().map(|(e, rows)| (*e, rmse(rows))).collect(),
            coverage_rate: rate(bounds.iter().map(|b| b.covered)),
            torque_coverage_rate: rate(bounds.iter().map(|b| b.torque_covered)),
            mean_torque_radius: radius,
            steps: traces.values().map(Vec::len).max().unwrap_or(0),
        }
    }
}
