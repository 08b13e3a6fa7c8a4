use nalgebra::{DMatrix, DVector};

/// Load-side friction `N(q̇)`: smoothed Coulomb plus viscous.
#[derive(Debug, Clone, PartialEq)]
pub struct Friction {
    pub coulomb: Vec<f64>,
    pub viscous: Vec<f64>,
    /// Velocity scale of the `tanh` that replaces `sign(q̇)` [rad/s].
    pub smoothing: f64,
}

impl Friction {
    pub fn none(n: usize) -> Self {
        Self {
            coulomb: vec![0.0; n],
            viscous: vec![0.0; n],
            smoothing: 0.01,
        }
    }

    pub fn torque(&self, qd: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(qd.len(), |i, _| {
            self.coulomb[i] * (qd[i] / self.smoothing).tanh() + self.viscous[i] * qd[i]
        })
    }
}

/// One rigid limb segment per joint: point mass `m` at distance `l` with
/// passive joint viscoelasticity.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanLimb {
    pub mass: Vec<f64>,
    pub length: Vec<f64>,
    pub damping: Vec<f64>,
    pub stiffness: Vec<f64>,
    pub rest_angle: Vec<f64>,
    pub gravity_offset: Vec<f64>,
    pub gravity: f64,
}

impl HumanLimb {
    pub fn none(n: usize) -> Self {
        Self {
            mass: vec![0.0; n],
            length: vec![0.0; n],
            damping: vec![0.0; n],
            stiffness: vec![0.0; n],
            rest_angle: vec![0.0; n],
            gravity_offset: vec![0.0; n],
            gravity: 9.81,
        }
    }

    /// Torque the passive limb exerts on the robot, `τ_h,pas(q, q̇, q̈)`.
    pub fn torque(&self, q: &DVector<f64>, qd: &DVector<f64>, qdd: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(q.len(), |i, _| {
            let ml = self.mass[i] * self.length[i];
            -(ml * self.length[i] * qdd[i]
                + ml * self.gravity * (q[i] + self.gravity_offset[i]).sin()
                + self.damping[i] * qd[i]
                + self.stiffness[i] * (q[i] - self.rest_angle[i]))
        })
    }

    fn inertia(&self) -> DVector<f64> {
        DVector::from_fn(self.mass.len(), |i, _| {
            self.mass[i] * self.length[i] * self.length[i]
        })
    }
}

/// Dynamics hidden from every estimator: the plant's true
/// `f(z) = N(q, q̇) − τ_h,pas(q, q̇, q̈)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenResidual {
    pub friction: Friction,
    pub human: HumanLimb,
}

impl HiddenResidual {
    pub fn none(n: usize) -> Self {
        Self {
            friction: Friction::none(n),
            human: HumanLimb::none(n),
        }
    }

    /// `f(z)` at `z = [q, q̇, q̈]`.
    pub fn residual(&self, q: &DVector<f64>, qd: &DVector<f64>, qdd: &DVector<f64>) -> DVector<f64> {
        self.friction.torque(qd) - self.human.torque(q, qd, qdd)
    }

    /// `f` evaluated on a stacked `z`.
    pub fn residual_z(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = z.len() / 3;
        self.residual(
            &z.rows(0, n).into_owned(),
            &z.rows(n, n).into_owned(),
            &z.rows(2 * n, n).into_owned(),
        )
    }

    /// `∂f/∂z`, an `n × 3n` matrix (diagonal within each block).
    pub fn jacobian_z(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = z.len() / 3;
        let (fr, hu) = (&self.friction, &self.human);
        let mut j = DMatrix::zeros(n, 3 * n);
        for i in 0..n {
            let (q, qd) = (z[i], z[n + i]);
            let ml = hu.mass[i] * hu.length[i];
            let th = (qd / fr.smoothing).tanh();
            j[(i, i)] = ml * hu.gravity * (q + hu.gravity_offset[i]).cos() + hu.stiffness[i];
            j[(i, n + i)] = fr.coulomb[i] * (1.0 - th * th) / fr.smoothing + fr.viscous[i] + hu.damping[i];
            j[(i, 2 * n + i)] = ml * hu.length[i];
        }
        j
    }

    /// `∂f/∂q̈`; `f` is affine in `q̈`, so the plant folds this into its inertia.
    pub fn acceleration_gain(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.human.inertia())
    }
}
