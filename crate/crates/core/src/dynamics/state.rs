use nalgebra::{DVector, DVectorView};

/// Blocks of the augmented state `[θ_m, θ_s, θ̇_m, θ̇_s, τ_h,act]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    MotorAngle = 0,
    SpringDeflection = 1,
    MotorVelocity = 2,
    SpringVelocity = 3,
    ActiveTorque = 4,
}

impl Block {
    pub fn offset(self, n: usize) -> usize {
        self as usize * n
    }
}

/// Augmented state vector of dimension `5n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    n: usize,
    data: DVector<f64>,
}

impl AugmentedState {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: DVector::zeros(5 * n),
        }
    }

    pub fn from_vector(data: DVector<f64>) -> Self {
        assert_eq!(data.len() % 5, 0, "augmented state length must be 5n");
        Self {
            n: data.len() / 5,
            data,
        }
    }

    pub fn from_parts(
        theta_m: &DVector<f64>,
        theta_s: &DVector<f64>,
        theta_m_dot: &DVector<f64>,
        theta_s_dot: &DVector<f64>,
        tau_act: &DVector<f64>,
    ) -> Self {
        let n = theta_m.len();
        let mut s = Self::zeros(n);
        s.set(Block::MotorAngle, theta_m);
        s.set(Block::SpringDeflection, theta_s);
        s.set(Block::MotorVelocity, theta_m_dot);
        s.set(Block::SpringVelocity, theta_s_dot);
        s.set(Block::ActiveTorque, tau_act);
        s
    }

    pub fn joints(&self) -> usize {
        self.n
    }

    pub fn block(&self, b: Block) -> DVectorView<'_, f64> {
        self.data.rows(b.offset(self.n), self.n)
    }

    pub fn set(&mut self, b: Block, v: &DVector<f64>) {
        let o = b.offset(self.n);
        self.data.rows_mut(o, self.n).copy_from(v);
    }

    pub fn theta_m(&self) -> DVector<f64> {
        self.block(Block::MotorAngle).into_owned()
    }
    pub fn theta_s(&self) -> DVector<f64> {
        self.block(Block::SpringDeflection).into_owned()
    }
    pub fn theta_m_dot(&self) -> DVector<f64> {
        self.block(Block::MotorVelocity).into_owned()
    }
    pub fn theta_s_dot(&self) -> DVector<f64> {
        self.block(Block::SpringVelocity).into_owned()
    }
    pub fn tau_act(&self) -> DVector<f64> {
        self.block(Block::ActiveTorque).into_owned()
    }

    /// Load angle `q = θ_s + θ_m`.
    pub fn q(&self) -> DVector<f64> {
        self.theta_s() + self.theta_m()
    }

    pub fn q_dot(&self) -> DVector<f64> {
        self.theta_s_dot() + self.theta_m_dot()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }
}

/// What the encoders and motor driver provide at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicsSample {
    pub t: f64,
    pub q: DVector<f64>,
    pub q_dot: DVector<f64>,
    pub q_ddot: DVector<f64>,
    pub theta_m: DVector<f64>,
    pub theta_m_dot: DVector<f64>,
    pub theta_m_ddot: DVector<f64>,
    pub tau_m: DVector<f64>,
}

impl KinematicsSample {
    /// GP input `z = [q, q̇, q̈]`.
    pub fn z(&self) -> DVector<f64> {
        let n = self.q.len();
        let mut z = DVector::zeros(3 * n);
        z.rows_mut(0, n).copy_from(&self.q);
        z.rows_mut(n, n).copy_from(&self.q_dot);
        z.rows_mut(2 * n, n).copy_from(&self.q_ddot);
        z
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.q,
            &self.q_dot,
            &self.q_ddot,
            &self.theta_m,
            &self.theta_m_dot,
            &self.theta_m_ddot,
            &self.tau_m,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
            && self.t.is_finite()
    }
}

/// True plant state in load/motor coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub q: DVector<f64>,
    pub q_dot: DVector<f64>,
    pub theta_m: DVector<f64>,
    pub theta_m_dot: DVector<f64>,
}

impl PlantState {
    pub fn rest(n: usize) -> Self {
        Self {
            q: DVector::zeros(n),
            q_dot: DVector::zeros(n),
            theta_m: DVector::zeros(n),
            theta_m_dot: DVector::zeros(n),
        }
    }

    /// Augmented state of this plant state with the given active torque.
    pub fn augmented(&self, tau_act: &DVector<f64>) -> AugmentedState {
        AugmentedState::from_parts(
            &self.theta_m,
            &(&self.q - &self.theta_m),
            &self.theta_m_dot,
            &(&self.q_dot - &self.theta_m_dot),
            tau_act,
        )
    }

    pub(crate) fn pack(&self) -> DVector<f64> {
        let n = self.q.len();
        let mut v = DVector::zeros(4 * n);
        v.rows_mut(0, n).copy_from(&self.q);
        v.rows_mut(n, n).copy_from(&self.theta_m);
        v.rows_mut(2 * n, n).copy_from(&self.q_dot);
        v.rows_mut(3 * n, n).copy_from(&self.theta_m_dot);
        v
    }

    pub(crate) fn unpack(v: &DVector<f64>) -> Self {
        let n = v.len() / 4;
        Self {
            q: v.rows(0, n).into_owned(),
            theta_m: v.rows(n, n).into_owned(),
            q_dot: v.rows(2 * n, n).into_owned(),
            theta_m_dot: v.rows(3 * n, n).into_owned(),
        }
    }
}
