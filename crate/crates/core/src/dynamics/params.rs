use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{is_symmetric, min_eigenvalue, spd_inverse};
use crate::{Error, Result};

/// Condition number of `M(q)` above which the inertia is treated as singular.
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e8;

/// Load-side rigid-body model: inertia `M(q)` and the lumped
/// Coriolis/centrifugal/gravity vector `C(q, q̇)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadModel {
    /// Decoupled pendulum joints with constant inertia and
    /// `C_i = g_i sin(q_i + φ_i)`.
    Pendulum {
        inertia: Vec<f64>,
        gravity_torque: Vec<f64>,
        gravity_offset: Vec<f64>,
    },
    /// Planar two-link arm in the vertical plane (configuration-dependent inertia).
    TwoLink(TwoLinkArm),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLinkArm {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub i1: f64,
    pub i2: f64,
    pub gravity: f64,
}

impl Default for TwoLinkArm {
    fn default() -> Self {
        Self {
            m1: 1.2,
            m2: 0.8,
            l1: 0.3,
            lc1: 0.15,
            lc2: 0.12,
            i1: 0.01,
            i2: 0.006,
            gravity: 9.81,
        }
    }
}

impl LoadModel {
    pub fn joints(&self) -> usize {
        match self {
            LoadModel::Pendulum { inertia, .. } => inertia.len(),
            LoadModel::TwoLink(_) => 2,
        }
    }

    pub fn inertia(&self, q: &DVector<f64>) -> DMatrix<f64> {
        match self {
            LoadModel::Pendulum { inertia, .. } => {
                DMatrix::from_diagonal(&DVector::from_column_slice(inertia))
            }
            LoadModel::TwoLink(a) => {
                let c2 = q[1].cos();
                let m11 = a.m1 * a.lc1 * a.lc1
                    + a.m2 * (a.l1 * a.l1 + a.lc2 * a.lc2 + 2.0 * a.l1 * a.lc2 * c2)
                    + a.i1
                    + a.i2;
                let m12 = a.m2 * (a.lc2 * a.lc2 + a.l1 * a.lc2 * c2) + a.i2;
                let m22 = a.m2 * a.lc2 * a.lc2 + a.i2;
                DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22])
            }
        }
    }

    pub fn bias(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        match self {
            LoadModel::Pendulum {
                gravity_torque,
                gravity_offset,
                ..
            } => DVector::from_fn(q.len(), |i, _| {
                gravity_torque[i] * (q[i] + gravity_offset[i]).sin()
            }),
            LoadModel::TwoLink(a) => {
                let h = -a.m2 * a.l1 * a.lc2 * q[1].sin();
                let g1 = (a.m1 * a.lc1 + a.m2 * a.l1) * a.gravity * q[0].cos()
                    + a.m2 * a.lc2 * a.gravity * (q[0] + q[1]).cos();
                let g2 = a.m2 * a.lc2 * a.gravity * (q[0] + q[1]).cos();
                DVector::from_column_slice(&[
                    h * qd[1] * qd[1] + 2.0 * h * qd[0] * qd[1] + g1,
                    -h * qd[0] * qd[0] + g2,
                ])
            }
        }
    }

    /// Analytic `(∂C/∂q, ∂C/∂q̇)` when available.
    pub fn bias_partials(
        &self,
        q: &DVector<f64>,
        _qd: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        match self {
            LoadModel::Pendulum {
                gravity_torque,
                gravity_offset,
                ..
            } => {
                let n = q.len();
                let dq = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| {
                    gravity_torque[i] * (q[i] + gravity_offset[i]).cos()
                }));
                Some((dq, DMatrix::zeros(n, n)))
            }
            LoadModel::TwoLink(_) => None,
        }
    }

    pub fn has_constant_inertia(&self) -> bool {
        matches!(self, LoadModel::Pendulum { .. })
    }
}

/// Elastic transmission law `τ_s = K_s(θ_s) θ_s + D_s θ̇_s`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpringLaw {
    Linear {
        stiffness: DMatrix<f64>,
        damping: DMatrix<f64>,
    },
    /// Per-joint stiffness `k₁ + k₃ θ_s²`; a negative `k₃` saturates the spring.
    Cubic {
        k1: DVector<f64>,
        k3: DVector<f64>,
        damping: DMatrix<f64>,
    },
}

impl SpringLaw {
    pub fn linear_diagonal(stiffness: &[f64], damping: &[f64]) -> Self {
        SpringLaw::Linear {
            stiffness: DMatrix::from_diagonal(&DVector::from_column_slice(stiffness)),
            damping: DMatrix::from_diagonal(&DVector::from_column_slice(damping)),
        }
    }

    pub fn damping(&self) -> &DMatrix<f64> {
        match self {
            SpringLaw::Linear { damping, .. } | SpringLaw::Cubic { damping, .. } => damping,
        }
    }

    pub fn torque(&self, theta_s: &DVector<f64>, theta_s_dot: &DVector<f64>) -> DVector<f64> {
        match self {
            SpringLaw::Linear { stiffness, damping } => stiffness * theta_s + damping * theta_s_dot,
            SpringLaw::Cubic { k1, k3, damping } => {
                let elastic = DVector::from_fn(theta_s.len(), |i, _| {
                    (k1[i] + k3[i] * theta_s[i] * theta_s[i]) * theta_s[i]
                });
                elastic + damping * theta_s_dot
            }
        }
    }

    /// `∂τ_s/∂θ_s`.
    pub fn stiffness_jacobian(&self, theta_s: &DVector<f64>) -> DMatrix<f64> {
        match self {
            SpringLaw::Linear { stiffness, .. } => stiffness.clone(),
            SpringLaw::Cubic { k1, k3, .. } => DMatrix::from_diagonal(&DVector::from_fn(
                theta_s.len(),
                |i, _| k1[i] + 3.0 * k3[i] * theta_s[i] * theta_s[i],
            )),
        }
    }

    fn joints(&self) -> usize {
        self.damping().nrows()
    }
}

/// Physical parameters of an n-DoF series elastic actuator.
#[derive(Debug, Clone)]
pub struct SeaParams {
    pub load: LoadModel,
    /// Motor inertia `J`, taken as configuration independent.
    pub motor_inertia: DMatrix<f64>,
    pub motor_damping: DMatrix<f64>,
    pub spring: SpringLaw,
    pub condition_limit: f64,
    motor_inertia_inv: DMatrix<f64>,
}

impl SeaParams {
    pub fn new(
        load: LoadModel,
        motor_inertia: DMatrix<f64>,
        motor_damping: DMatrix<f64>,
        spring: SpringLaw,
    ) -> Result<Self> {
        let n = load.joints();
        if n == 0 {
            return Err(Error::Config("at least one joint is required".into()));
        }
        if let LoadModel::Pendulum {
            inertia,
            gravity_torque,
            gravity_offset,
        } = &load
        {
            if gravity_torque.len() != n || gravity_offset.len() != n {
                return Err(Error::Dimension(
                    "pendulum gravity vectors must have one entry per joint".into(),
                ));
            }
            if inertia.iter().any(|&m| !(m > 0.0)) {
                return Err(Error::Config("load inertia must be positive".into()));
            }
        }
        for (name, m) in [
            ("motor inertia", &motor_inertia),
            ("motor damping", &motor_damping),
            ("spring damping", spring.damping()),
        ] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension(format!("{name} must be {n}x{n}")));
            }
            if !is_symmetric(m, 1e-12) {
                return Err(Error::Config(format!("{name} must be symmetric")));
            }
            if min_eigenvalue(m) < -1e-12 {
                return Err(Error::Config(format!("{name} must be positive semidefinite")));
            }
        }
        if spring.joints() != n {
            return Err(Error::Dimension("spring law joint count mismatch".into()));
        }
        if let SpringLaw::Linear { stiffness, .. } = &spring {
            if stiffness.nrows() != n || stiffness.ncols() != n {
                return Err(Error::Dimension(format!("spring stiffness must be {n}x{n}")));
            }
        }
        let motor_inertia_inv = spd_inverse(&motor_inertia, DEFAULT_CONDITION_LIMIT)
            .map_err(|_| Error::Config("motor inertia must be positive definite".into()))?;
        let params = Self {
            load,
            motor_inertia,
            motor_damping,
            spring,
            condition_limit: DEFAULT_CONDITION_LIMIT,
            motor_inertia_inv,
        };
        params.load_inertia_inv(&DVector::zeros(n))?;
        Ok(params)
    }

    /// Single-joint SEA with a pendulum load.
    pub fn single_joint(
        load_inertia: f64,
        link_gravity: f64,
        motor_inertia: f64,
        motor_damping: f64,
        stiffness: f64,
        spring_damping: f64,
    ) -> Result<Self> {
        Self::new(
            LoadModel::Pendulum {
                inertia: vec![load_inertia],
                gravity_torque: vec![link_gravity],
                gravity_offset: vec![0.0],
            },
            DMatrix::from_element(1, 1, motor_inertia),
            DMatrix::from_element(1, 1, motor_damping),
            SpringLaw::linear_diagonal(&[stiffness], &[spring_damping]),
        )
    }

    pub fn joints(&self) -> usize {
        self.load.joints()
    }

    pub fn state_dim(&self) -> usize {
        5 * self.joints()
    }

    pub fn motor_inertia_inv(&self) -> &DMatrix<f64> {
        &self.motor_inertia_inv
    }

    /// `M(q)⁻¹`, or [`Error::SingularInertia`] above the condition limit.
    pub fn load_inertia_inv(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        spd_inverse(&self.load.inertia(q), self.condition_limit)
    }
}

impl Default for SeaParams {
    /// One-joint elbow exoskeleton used throughout the bundled scenarios.
    fn default() -> Self {
        Self::single_joint(0.35, 0.0, 0.12, 0.8, 120.0, 0.5).expect("valid defaults")
    }
}
