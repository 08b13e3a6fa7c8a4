//! Series-elastic-actuator dynamics.
//!
//! Load side `M(q) q̈ + C(q, q̇) + N(q, q̇) + τ_s = τ_h,pas + τ_h,act` and motor
//! side `J θ̈_m + D_m θ̇_m − τ_s = τ_m`, coupled through the spring torque
//! `τ_s(θ_s, θ̇_s)` with deflection `θ_s = q − θ_m`.

mod discretize;
mod model;
mod params;
mod plant;
mod residual;
mod state;

pub use discretize::{discretize_jacobian, discretize_step, rk4_step};
pub use model::{
    finite_difference_jacobian, nominal_dynamics, nominal_jacobian, reconstruct_z,
    residual_input_map, residual_target, spring_torque, z_jacobian,
};
pub use params::{LoadModel, SeaParams, SpringLaw, TwoLinkArm, DEFAULT_CONDITION_LIMIT};
pub use plant::{plant_accelerations, plant_step, static_equilibrium, PlantStep};
pub use residual::{Friction, HiddenResidual, HumanLimb};
pub use state::{AugmentedState, Block, KinematicsSample, PlantState};
