use nalgebra::{DMatrix, DVector};

use crate::linalg::symmetrize;
use crate::{Error, Result};

/// `E(c, X) = { x : (x − c)ᵀ X⁺ (x − c) ≤ 1 }`, with `x − c` restricted to the
/// range of `X` when the shape is singular.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
}

const CONTAIN_TOL: f64 = 1e-12;
const NULL_TOL: f64 = 1e-9;

impl Ellipsoid {
    /// Validates symmetry (to 1e-12) and positive semidefiniteness (to −1e-10).
    pub fn new(center: DVector<f64>, mut shape: DMatrix<f64>) -> Result<Self> {
        let d = center.len();
        if shape.shape() != (d, d) {
            return Err(Error::Dimension(format!("shape must be {d}×{d}")));
        }
        if (&shape - shape.transpose()).amax() > 1e-12 * shape.amax().max(1.0) {
            return Err(Error::Domain("ellipsoid shape is not symmetric".into()));
        }
        symmetrize(&mut shape);
        if d > 0 && shape.clone().symmetric_eigen().eigenvalues.min() < -1e-10 * shape.amax().max(1.0) {
            return Err(Error::Domain("ellipsoid shape is not positive semidefinite".into()));
        }
        Ok(Self { center, shape })
    }

    pub fn point(center: DVector<f64>) -> Self {
        let d = center.len();
        Self {
            center,
            shape: DMatrix::zeros(d, d),
        }
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Self {
        let d = center.len();
        Self {
            center,
            shape: DMatrix::identity(d, d) * (radius * radius),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn trace(&self) -> f64 {
        self.shape.trace()
    }

    /// Pseudo-inverse quadratic form plus null-space membership.
    pub fn contains(&self, p: &DVector<f64>) -> bool {
        let r = p - &self.center;
        let eig = self.shape.clone().symmetric_eigen();
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        let cutoff = 1e-12 * lmax;
        let mut q = 0.0;
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            let c = eig.eigenvectors.column(i).dot(&r);
            if l > cutoff && l > 0.0 {
                q += c * c / l;
            } else if c.abs() > NULL_TOL * (1.0 + lmax.sqrt()) {
                return false;
            }
        }
        q <= 1.0 + CONTAIN_TOL
    }

    /// `E(A c + b, A X Aᵀ)`.
    pub fn affine_map(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        let mut shape = a * &self.shape * a.transpose();
        symmetrize(&mut shape);
        Self {
            center: a * &self.center + b,
            shape,
        }
    }

    pub fn translate(&self, b: &DVector<f64>) -> Self {
        Self {
            center: &self.center + b,
            shape: self.shape.clone(),
        }
    }

    /// Trace-optimal outer ellipsoid of the Minkowski sum:
    /// `(1 + 1/p) X₁ + (1 + p) X₂` with `p = √(tr X₁ / tr X₂)`.
    pub fn minkowski_outer(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "Minkowski sum of different dimensions");
        let (t1, t2) = (self.trace(), other.trace());
        let center = &self.center + &other.center;
        if t1 <= 0.0 {
            return Self { center, shape: other.shape.clone() };
        }
        if t2 <= 0.0 {
            return Self { center, shape: self.shape.clone() };
        }
        let p = (t1 / t2).sqrt();
        let mut shape = &self.shape * (1.0 + 1.0 / p) + &other.shape * (1.0 + p);
        symmetrize(&mut shape);
        Self { center, shape }
    }

    /// Support function `max_{x ∈ E} dᵀx`.
    pub fn support(&self, direction: &DVector<f64>) -> f64 {
        self.center.dot(direction) + (direction.dot(&(&self.shape * direction))).max(0.0).sqrt()
    }

    /// Half-width of the projection onto coordinate `i`.
    pub fn axis_radius(&self, i: usize) -> f64 {
        self.shape[(i, i)].max(0.0).sqrt()
    }

    /// `c ± √λ_i v_i` for every eigenpair.
    pub fn axis_endpoints(&self) -> Vec<DVector<f64>> {
        let eig = self.shape.clone().symmetric_eigen();
        let mut out = Vec::with_capacity(2 * self.dim());
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(i) * l.max(0.0).sqrt();
            out.push(&self.center + &v);
            out.push(&self.center - &v);
        }
        out
    }
}
