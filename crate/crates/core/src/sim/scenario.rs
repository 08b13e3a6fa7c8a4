//! Scenario files: TOML with the physical unit spelled out in every key.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::pid::PidGains;
use super::sensors::NoiseConfig;
use super::trajectory::{sigmoid_trajectory, SigmoidTrajectory};
use crate::bounds::BoundConfig;
use crate::dynamics::{Friction, HiddenResidual, HumanLimb, LoadModel, SeaParams, SpringLaw, TwoLinkArm};
use crate::estimators::{PAPER_MEASUREMENT_NOISE, PAPER_PROCESS_NOISE, DEFAULT_TORQUE_PRIOR_VARIANCE};
use crate::gp::{EvictionPolicy, Hyperparameters, OptimizerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Training,
    Estimation,
}

/// Where the filter's GP takes its load-acceleration input from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccelerationInput {
    /// Rebuilt from the model and the previous residual mean.
    #[default]
    Model,
    /// The differentiated encoder signal at the previous sample.
    Measured,
}

/// Where a PID reference comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSignal {
    Sigmoid(SigmoidTrajectory),
    Constant(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Controller {
    PidTracking(ReferenceSignal),
    /// `τ_m = τ_des(t) + τ_comp(hold)` with the cosine resistance profile.
    OpenLoopTorque {
        hold: Vec<f64>,
        frequency: f64,
        amplitude: f64,
    },
}

/// Ground-truth active torque of the simulated user.
#[derive(Debug, Clone, PartialEq)]
pub enum ActiveTorque {
    Zero,
    Constant(Vec<f64>),
    /// `−τ_des(t)` of the phase's open-loop profile.
    OpposeProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub kind: PhaseKind,
    pub duration: f64,
    pub controller: Controller,
    pub active_torque: ActiveTorque,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpSettings {
    pub budget: Option<usize>,
    pub eviction: EvictionPolicy,
    pub optimize: bool,
    pub initial: Hyperparameters,
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSettings {
    pub measurement_noise: [f64; 4],
    pub process_noise: [f64; 5],
    pub torque_prior_variance: f64,
    pub joseph: bool,
    pub acceleration: AccelerationInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSettings {
    pub enabled: bool,
    pub config: BoundConfig,
}

/// A validated experiment description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub sample_rate: f64,
    /// Plant integration steps per sample.
    pub substeps: usize,
    pub params: SeaParams,
    pub hidden: HiddenResidual,
    pub initial_position: Vec<f64>,
    pub noise: NoiseConfig,
    pub gp: GpSettings,
    pub filter: FilterSettings,
    pub bounds: BoundSettings,
    pub pid: PidGains,
    pub phases: Vec<Phase>,
}

impl Scenario {
    pub fn joints(&self) -> usize {
        self.params.joints()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn delta(&self) -> f64 {
        self.bounds.config.delta
    }

    pub fn samples(&self, phase: &Phase) -> usize {
        (phase.duration * self.sample_rate).round() as usize
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.message().trim().to_string()))?;
        raw.into_scenario()
    }

    /// Reads and validates a scenario; a missing file is a configuration error.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

// ---- file schema -----------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: ScenarioSection,
    plant: PlantSection,
    #[serde(default)]
    hidden: Option<HiddenSection>,
    #[serde(default)]
    noise: NoiseConfig,
    #[serde(default)]
    gp: GpSection,
    #[serde(default)]
    filter: FilterSection,
    #[serde(default)]
    bounds: BoundSection,
    #[serde(default)]
    pid: PidGains,
    #[serde(default)]
    phase: Vec<PhaseSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    name: String,
    #[serde(default)]
    seed: u64,
    #[serde(rename = "sample_rate_Hz", default = "default_rate")]
    sample_rate: f64,
    #[serde(default = "default_substeps")]
    plant_substeps: usize,
}

fn default_rate() -> f64 {
    100.0
}

fn default_substeps() -> usize {
    10
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantSection {
    #[serde(default)]
    load: LoadKind,
    #[serde(rename = "load_inertia_kgm2", default)]
    load_inertia: Vec<f64>,
    #[serde(rename = "link_gravity_Nm", default)]
    link_gravity: Option<Vec<f64>>,
    #[serde(rename = "link_gravity_offset_rad", default)]
    link_gravity_offset: Option<Vec<f64>>,
    #[serde(default)]
    two_link: Option<TwoLinkArm>,
    #[serde(rename = "motor_inertia_kgm2")]
    motor_inertia: Vec<f64>,
    #[serde(rename = "motor_damping_Nms_per_rad")]
    motor_damping: Vec<f64>,
    #[serde(rename = "spring_stiffness_Nm_per_rad")]
    spring_stiffness: Vec<f64>,
    #[serde(rename = "spring_cubic_Nm_per_rad3", default)]
    spring_cubic: Option<Vec<f64>>,
    #[serde(rename = "spring_damping_Nms_per_rad")]
    spring_damping: Vec<f64>,
    #[serde(rename = "initial_position_rad")]
    initial_position: Vec<f64>,
    #[serde(default)]
    condition_limit: Option<f64>,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
enum LoadKind {
    #[default]
    Pendulum,
    TwoLink,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HiddenSection {
    #[serde(rename = "coulomb_Nm", default)]
    coulomb: Option<Vec<f64>>,
    #[serde(rename = "viscous_Nms_per_rad", default)]
    viscous: Option<Vec<f64>>,
    #[serde(rename = "friction_smoothing_rad_per_s", default = "default_smoothing")]
    smoothing: f64,
    #[serde(rename = "arm_mass_kg", default)]
    arm_mass: Option<Vec<f64>>,
    #[serde(rename = "arm_length_m", default)]
    arm_length: Option<Vec<f64>>,
    #[serde(rename = "arm_damping_Nms_per_rad", default)]
    arm_damping: Option<Vec<f64>>,
    #[serde(rename = "arm_stiffness_Nm_per_rad", default)]
    arm_stiffness: Option<Vec<f64>>,
    #[serde(rename = "arm_rest_angle_rad", default)]
    arm_rest_angle: Option<Vec<f64>>,
    #[serde(rename = "arm_gravity_offset_rad", default)]
    arm_gravity_offset: Option<Vec<f64>>,
    #[serde(rename = "gravity_m_per_s2", default = "default_gravity")]
    gravity: f64,
}

fn default_smoothing() -> f64 {
    0.01
}

fn default_gravity() -> f64 {
    9.81
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GpSection {
    /// `0` keeps every point.
    budget: usize,
    eviction: EvictionPolicy,
    optimize: bool,
    #[serde(rename = "initial_signal_std_Nm")]
    initial_signal_std: f64,
    /// Lengthscales for the `q` [rad], `q̇` [rad/s] and `q̈` [rad/s²] blocks.
    initial_lengthscales: [f64; 3],
    #[serde(rename = "initial_noise_std_Nm")]
    initial_noise_std: f64,
    optimizer: OptimizerConfig,
}

impl Default for GpSection {
    fn default() -> Self {
        Self {
            budget: 0,
            eviction: EvictionPolicy::Fifo,
            optimize: true,
            initial_signal_std: 1.0,
            initial_lengthscales: [0.5, 0.5, 2.0],
            initial_noise_std: 0.05,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FilterSection {
    /// Variances of `[θ_m, θ_s, θ̇_m, θ̇_s]` in rad² and (rad/s)².
    measurement_noise: [f64; 4],
    /// Continuous-time intensities for `[θ_m, θ_s, θ̇_m, θ̇_s, τ_act]`.
    process_noise: [f64; 5],
    #[serde(rename = "torque_prior_variance_N2m2")]
    torque_prior_variance: f64,
    joseph: bool,
    acceleration: AccelerationInput,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            measurement_noise: PAPER_MEASUREMENT_NOISE,
            process_noise: PAPER_PROCESS_NOISE,
            torque_prior_variance: DEFAULT_TORQUE_PRIOR_VARIANCE,
            joseph: false,
            acceleration: AccelerationInput::Model,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BoundSection {
    enabled: bool,
    beta: f64,
    delta: f64,
    safety_factor: f64,
    per_coordinate: bool,
    linearization: bool,
}

impl Default for BoundSection {
    fn default() -> Self {
        let c = BoundConfig::default();
        Self {
            enabled: true,
            beta: c.beta,
            delta: c.delta,
            safety_factor: c.safety_factor,
            per_coordinate: c.per_coordinate,
            linearization: c.linearization,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ControllerKind {
    Sigmoid,
    Hold,
    OpenLoop,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ActiveKind {
    #[default]
    Zero,
    Constant,
    OpposeProfile,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseSection {
    kind: PhaseKind,
    #[serde(rename = "duration_s")]
    duration: f64,
    controller: ControllerKind,
    #[serde(rename = "start_rad", default)]
    start: Option<Vec<f64>>,
    #[serde(rename = "end_rad", default)]
    end: Option<Vec<f64>>,
    #[serde(rename = "segment_s", default)]
    segment: Option<f64>,
    #[serde(rename = "hold_rad", default)]
    hold: Option<Vec<f64>>,
    #[serde(rename = "profile_frequency_Hz", default)]
    frequency: Option<f64>,
    #[serde(rename = "profile_amplitude_Nm", default)]
    amplitude: Option<f64>,
    #[serde(default)]
    active_torque: ActiveKind,
    #[serde(rename = "active_torque_Nm", default)]
    active_value: Option<Vec<f64>>,
}

fn per_joint(name: &str, v: Option<Vec<f64>>, n: usize, fill: f64) -> Result<Vec<f64>> {
    let v = v.unwrap_or_else(|| vec![fill; n]);
    if v.len() != n {
        return Err(Error::Config(format!("{name} has {} entries, expected one per joint ({n})", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{name} must be finite")));
    }
    Ok(v)
}

fn non_negative(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|&x| x < 0.0) {
        return Err(Error::Config(format!("{name} must be non-negative")));
    }
    Ok(())
}

fn required<T>(name: &str, phase: usize, v: Option<T>) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("phase {}: missing {name}", phase + 1)))
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let s = &self.scenario;
        if s.name.trim().is_empty() || s.name.contains(['/', '\\']) {
            return Err(Error::Config("scenario.name must be a non-empty file-name-safe string".into()));
        }
        if !(s.sample_rate > 0.0 && s.sample_rate.is_finite()) {
            return Err(Error::Config("scenario.sample_rate_Hz must be positive".into()));
        }
        if s.plant_substeps == 0 {
            return Err(Error::Config("scenario.plant_substeps must be at least 1".into()));
        }
        let p = &self.plant;
        let load = match p.load {
            LoadKind::Pendulum => {
                let n = p.load_inertia.len();
                if n == 0 {
                    return Err(Error::Config("plant.load_inertia_kgm2 needs one entry per joint".into()));
                }
                LoadModel::Pendulum {
                    inertia: p.load_inertia.clone(),
                    gravity_torque: per_joint("plant.link_gravity_Nm", p.link_gravity.clone(), n, 0.0)?,
                    gravity_offset: per_joint("plant.link_gravity_offset_rad", p.link_gravity_offset.clone(), n, 0.0)?,
                }
            }
            LoadKind::TwoLink => LoadModel::TwoLink(p.two_link.unwrap_or_default()),
        };
        let n = load.joints();
        let motor_inertia = per_joint("plant.motor_inertia_kgm2", Some(p.motor_inertia.clone()), n, 0.0)?;
        let motor_damping = per_joint("plant.motor_damping_Nms_per_rad", Some(p.motor_damping.clone()), n, 0.0)?;
        let stiffness = per_joint("plant.spring_stiffness_Nm_per_rad", Some(p.spring_stiffness.clone()), n, 0.0)?;
        let damping = per_joint("plant.spring_damping_Nms_per_rad", Some(p.spring_damping.clone()), n, 0.0)?;
        non_negative("plant.motor_damping_Nms_per_rad", &motor_damping)?;
        non_negative("plant.spring_damping_Nms_per_rad", &damping)?;
        if stiffness.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::Config("plant.spring_stiffness_Nm_per_rad must be positive".into()));
        }
        let spring = match &p.spring_cubic {
            Some(c) if c.iter().any(|&x| x != 0.0) => {
                let c = per_joint("plant.spring_cubic_Nm_per_rad3", Some(c.clone()), n, 0.0)?;
                SpringLaw::Cubic {
                    k1: DVector::from_vec(stiffness),
                    k3: DVector::from_vec(c),
                    damping: DMatrix::from_diagonal(&DVector::from_vec(damping)),
                }
            }
            _ => SpringLaw::linear_diagonal(&stiffness, &damping),
        };
        let mut params = SeaParams::new(
            load,
            DMatrix::from_diagonal(&DVector::from_vec(motor_inertia)),
            DMatrix::from_diagonal(&DVector::from_vec(motor_damping)),
            spring,
        )
        .map_err(|e| Error::Config(format!("plant: {e}")))?;
        if let Some(c) = p.condition_limit {
            if !(c > 1.0) {
                return Err(Error::Config("plant.condition_limit must exceed 1".into()));
            }
            params.condition_limit = c;
        }
        let initial_position = per_joint("plant.initial_position_rad", Some(p.initial_position.clone()), n, 0.0)?;

        let hidden = match self.hidden {
            None => HiddenResidual::none(n),
            Some(h) => {
                if !(h.smoothing > 0.0) {
                    return Err(Error::Config("hidden.friction_smoothing_rad_per_s must be positive".into()));
                }
                let friction = Friction {
                    coulomb: per_joint("hidden.coulomb_Nm", h.coulomb, n, 0.0)?,
                    viscous: per_joint("hidden.viscous_Nms_per_rad", h.viscous, n, 0.0)?,
                    smoothing: h.smoothing,
                };
                let human = HumanLimb {
                    mass: per_joint("hidden.arm_mass_kg", h.arm_mass, n, 0.0)?,
                    length: per_joint("hidden.arm_length_m", h.arm_length, n, 0.0)?,
                    damping: per_joint("hidden.arm_damping_Nms_per_rad", h.arm_damping, n, 0.0)?,
                    stiffness: per_joint("hidden.arm_stiffness_Nm_per_rad", h.arm_stiffness, n, 0.0)?,
                    rest_angle: per_joint("hidden.arm_rest_angle_rad", h.arm_rest_angle, n, 0.0)?,
                    gravity_offset: per_joint("hidden.arm_gravity_offset_rad", h.arm_gravity_offset, n, 0.0)?,
                    gravity: h.gravity,
                };
                non_negative("hidden.arm_mass_kg", &human.mass)?;
                non_negative("hidden.arm_length_m", &human.length)?;
                HiddenResidual { friction, human }
            }
        };

        self.noise.validate()?;
        self.pid.validate()?;

        let g = self.gp;
        let initial = Hyperparameters::new(
            g.initial_signal_std,
            (0..3).flat_map(|b| std::iter::repeat(g.initial_lengthscales[b]).take(n)).collect(),
            g.initial_noise_std,
        )
        .map_err(|e| Error::Config(format!("gp initial hyperparameters: {e}")))?;
        if g.optimizer.restarts == 0 || g.optimizer.iterations == 0 || !(g.optimizer.learning_rate > 0.0) {
            return Err(Error::Config("gp.optimizer needs restarts, iterations and learning_rate above zero".into()));
        }
        let gp = GpSettings {
            budget: (g.budget > 0).then_some(g.budget),
            eviction: g.eviction,
            optimize: g.optimize,
            initial,
            optimizer: g.optimizer,
        };

        let f = self.filter;
        if f.measurement_noise.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::Config("filter.measurement_noise variances must be positive".into()));
        }
        if f.process_noise.iter().any(|&q| !(q >= 0.0 && q.is_finite())) {
            return Err(Error::Config("filter.process_noise must be non-negative".into()));
        }
        if !(f.torque_prior_variance > 0.0) {
            return Err(Error::Config("filter.torque_prior_variance_N2m2 must be positive".into()));
        }
        let filter = FilterSettings {
            measurement_noise: f.measurement_noise,
            process_noise: f.process_noise,
            torque_prior_variance: f.torque_prior_variance,
            joseph: f.joseph,
            acceleration: f.acceleration,
        };

        let b = self.bounds;
        let bounds = BoundSettings {
            enabled: b.enabled,
            config: BoundConfig {
                beta: b.beta,
                delta: b.delta,
                safety_factor: b.safety_factor,
                per_coordinate: b.per_coordinate,
                linearization: b.linearization,
            },
        };
        bounds.config.validate()?;

        let phases = self
            .phase
            .into_iter()
            .enumerate()
            .map(|(i, ph)| build_phase(i, ph, n))
            .collect::<Result<Vec<_>>>()?;
        validate_phase_order(&phases)?;

        Ok(Scenario {
            name: self.scenario.name,
            seed: self.scenario.seed,
            sample_rate: self.scenario.sample_rate,
            substeps: self.scenario.plant_substeps,
            params,
            hidden,
            initial_position,
            noise: self.noise,
            gp,
            filter,
            bounds,
            pid: self.pid,
            phases,
        })
    }
}

fn build_phase(i: usize, ph: PhaseSection, n: usize) -> Result<Phase> {
    if !(ph.duration > 0.0 && ph.duration.is_finite()) {
        return Err(Error::Config(format!("phase {}: duration_s must be positive", i + 1)));
    }
    let controller = match ph.controller {
        ControllerKind::Sigmoid => {
            let start = per_joint("start_rad", Some(required("start_rad", i, ph.start)?), n, 0.0)?;
            let end = per_joint("end_rad", Some(required("end_rad", i, ph.end)?), n, 0.0)?;
            let segment = required("segment_s", i, ph.segment)?;
            if !(segment > 0.0) {
                return Err(Error::Config(format!("phase {}: segment_s must be positive", i + 1)));
            }
            let reps = (ph.duration / segment - 1e-9).ceil().max(1.0) as usize;
            Controller::PidTracking(ReferenceSignal::Sigmoid(sigmoid_trajectory(&start, &end, segment, reps)))
        }
        ControllerKind::Hold => Controller::PidTracking(ReferenceSignal::Constant(per_joint(
            "hold_rad",
            Some(required("hold_rad", i, ph.hold)?),
            n,
            0.0,
        )?)),
        ControllerKind::OpenLoop => {
            let hold = per_joint("hold_rad", Some(required("hold_rad", i, ph.hold)?), n, 0.0)?;
            let frequency = ph.frequency.unwrap_or(0.1);
            if !(frequency > 0.0) {
                return Err(Error::Config(format!("phase {}: profile_frequency_Hz must be positive", i + 1)));
            }
            Controller::OpenLoopTorque {
                hold,
                frequency,
                amplitude: ph.amplitude.unwrap_or(2.0),
            }
        }
    };
    let active_torque = match ph.active_torque {
        ActiveKind::Zero => ActiveTorque::Zero,
        ActiveKind::Constant => ActiveTorque::Constant(per_joint(
            "active_torque_Nm",
            Some(required("active_torque_Nm", i, ph.active_value)?),
            n,
            0.0,
        )?),
        ActiveKind::OpposeProfile => {
            if !matches!(controller, Controller::OpenLoopTorque { .. }) {
                return Err(Error::Config(format!(
                    "phase {}: active_torque = \"oppose_profile\" needs controller = \"open_loop\"",
                    i + 1
                )));
            }
            ActiveTorque::OpposeProfile
        }
    };
    if ph.kind == PhaseKind::Training && active_torque != ActiveTorque::Zero {
        return Err(Error::Config(format!("phase {}: training phases must be passive (active_torque = \"zero\")", i + 1)));
    }
    Ok(Phase {
        kind: ph.kind,
        duration: ph.duration,
        controller,
        active_torque,
    })
}

/// Training phases first, then at least one estimation phase.
fn validate_phase_order(phases: &[Phase]) -> Result<()> {
    let first_est = phases.iter().position(|p| p.kind == PhaseKind::Estimation);
    match first_est {
        None => Err(Error::Config("scenario needs at least one estimation phase".into())),
        Some(0) => Err(Error::Config("a training phase must precede the first estimation phase".into())),
        Some(k) => {
            if phases[k..].iter().any(|p| p.kind == PhaseKind::Training) {
                return Err(Error::Config("training phases cannot follow an estimation phase".into()));
            }
            Ok(())
        }
    }
}
