use nalgebra::{DMatrix, DVector};

use super::ellipsoid::Ellipsoid;
use crate::error::ensure_finite;
use crate::Result;

/// Deterministic probe points of `means ⊕ E(0, cov)`: the centre, the axis
/// endpoints of each operand, and all pairwise sums of those endpoints.
pub fn outer_samples(means: &Ellipsoid, cov: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let zero = Ellipsoid {
        center: DVector::zeros(means.dim()),
        shape: cov.clone(),
    };
    let a = means.axis_endpoints();
    let b = zero.axis_endpoints();
    let mut out = Vec::with_capacity(1 + a.len() + b.len() + a.len() * b.len());
    out.push(means.center.clone());
    out.extend(a.iter().cloned());
    out.extend(b.iter().map(|v| v + &means.center));
    for p in &a {
        for v in &b {
            out.push(p + v);
        }
    }
    out
}

/// Central-difference Jacobian of a discrete map.
pub fn map_jacobian<F>(map: &F, x: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let d = x.len();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (map(&xp)? - map(&xm)?) / (2.0 * h);
        ensure_finite(&col, "map Jacobian")?;
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// `E(0, diag(d e_j²))` with `e_j` the largest sampled gap between `map` and
/// its linearisation `map(x₀) + F (x − x₀)`, inflated by `safety`.
pub fn linearization_error_ellipsoid<F>(
    map: F,
    x0: &DVector<f64>,
    jacobian: &DMatrix<f64>,
    samples: &[DVector<f64>],
    safety: f64,
) -> Result<Ellipsoid>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let f0 = map(x0)?;
    ensure_finite(&f0, "linearisation centre")?;
    let d = f0.len();
    let mut e = DVector::<f64>::zeros(d);
    for s in samples {
        let fs = map(s)?;
        ensure_finite(&fs, "linearisation sample")?;
        let gap = fs - &f0 - jacobian * (s - x0);
        for j in 0..d {
            e[j] = e[j].max(gap[j].abs());
        }
    }
    let scale = d as f64 * safety * safety;
    Ok(Ellipsoid {
        center: DVector::zeros(d),
        shape: DMatrix::from_diagonal(&e.map(|v| scale * v * v)),
    })
}
