//! Phase orchestration: plant simulation, online training and lock-step estimation.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::RunMetrics;
use super::pid::Pid;
use super::profile::{resistance_profile_scaled, static_compensation};
use super::scenario::{AccelerationInput, ActiveTorque, Controller, Phase, PhaseKind, ReferenceSignal, Scenario};
use super::sensors::{measure, observation};
use crate::bounds::{BoundSample, BoundTracker};
use crate::dynamics::{plant_step, residual_target, static_equilibrium, KinematicsSample, PlantState};
use crate::estimators::{akf_step, gp_akf_step, gp_akf_step_measured, spring_torque_estimate, FilterConfig, FilterState};
use crate::gp::{optimize_hyperparameters, Hyperparameters, MultiGp, OptimizationResult, ResidualModel, TrainingSet};
use crate::{Error, Result};

/// Where the simulation currently stands.
#[derive(Debug, Clone)]
pub struct SimCursor {
    pub state: PlantState,
    pub pid: Pid,
    /// Scenario time [s].
    pub t: f64,
}

impl SimCursor {
    /// Plant at rest at the scenario's initial position, PID integrator preloaded
    /// with the holding torque.
    pub fn initial(sc: &Scenario) -> Result<Self> {
        let n = sc.joints();
        let q0 = DVector::from_column_slice(&sc.initial_position);
        let (state, hold) = static_equilibrium(&sc.params, &sc.hidden, &q0, &DVector::zeros(n))?;
        Ok(Self {
            state,
            pid: Pid::preloaded(sc.pid.clone(), &hold),
            t: 0.0,
        })
    }
}

/// Exact samples of one simulated phase.
#[derive(Debug, Clone)]
pub struct PhaseLog {
    pub kind: PhaseKind,
    pub samples: Vec<KinematicsSample>,
    /// True augmented state `[θ_m, θ_s, θ̇_m, θ̇_s, τ_act]` at each sample.
    pub truth: Vec<DVector<f64>>,
    /// PID reference, or the hold position for open-loop phases.
    pub reference: Vec<DVector<f64>>,
}

fn active_torque(phase: &Phase, n: usize, t: f64) -> DVector<f64> {
    match (&phase.active_torque, &phase.controller) {
        (ActiveTorque::Zero, _) => DVector::zeros(n),
        (ActiveTorque::Constant(v), _) => DVector::from_column_slice(v),
        (ActiveTorque::OpposeProfile, Controller::OpenLoopTorque { frequency, amplitude, .. }) => {
            DVector::from_element(n, -resistance_profile_scaled(*amplitude, *frequency, t))
        }
        (ActiveTorque::OpposeProfile, _) => DVector::zeros(n),
    }
}

/// Steps the plant through one phase with its controller, sampling at the scenario rate.
pub fn simulate_phase(sc: &Scenario, phase: &Phase, cursor: &mut SimCursor) -> Result<PhaseLog> {
    let n = sc.joints();
    let dt = sc.dt();
    let h = dt / sc.substeps as f64;
    let len = sc.samples(phase);
    let comp = match &phase.controller {
        Controller::OpenLoopTorque { hold, .. } => {
            static_compensation(&sc.params, &sc.hidden, &DVector::from_column_slice(hold))?
        }
        Controller::PidTracking(_) => DVector::zeros(n),
    };
    let mut log = PhaseLog {
        kind: phase.kind,
        samples: Vec::with_capacity(len),
        truth: Vec::with_capacity(len),
        reference: Vec::with_capacity(len),
    };
    for k in 0..len {
        let tp = k as f64 * dt;
        let (u, reference) = match &phase.controller {
            Controller::PidTracking(r) => {
                let q_ref = match r {
                    ReferenceSignal::Sigmoid(tr) => tr.at(tp).q,
                    ReferenceSignal::Constant(q) => q.clone(),
                };
                let u = cursor.pid.update(&q_ref, &cursor.state.q, &cursor.state.q_dot, dt);
                (u, DVector::from_vec(q_ref))
            }
            Controller::OpenLoopTorque { hold, frequency, amplitude } => {
                let tau_des = resistance_profile_scaled(*amplitude, *frequency, tp);
                (comp.add_scalar(tau_des), DVector::from_column_slice(hold))
            }
        };
        let mut sample = None;
        for j in 0..sc.substeps {
            let ts = tp + j as f64 * h;
            let tau_act = active_torque(phase, n, ts);
            if phase.kind == PhaseKind::Training && tau_act.iter().any(|&v| v != 0.0) {
                return Err(Error::Domain("active torque during a training phase".into()));
            }
            let step = plant_step(&sc.params, &sc.hidden, &cursor.state, &u, &tau_act, h, cursor.t + ts)?;
            cursor.state = step.state;
            sample = Some(step.sample);
        }
        let mut sample = sample.expect("at least one substep");
        sample.t = cursor.t + tp + dt;
        log.truth
            .push(cursor.state.augmented(&active_torque(phase, n, tp + dt)).into_vector());
        log.samples.push(sample);
        log.reference.push(reference);
    }
    cursor.t += len as f64 * dt;
    Ok(log)
}

/// Measurement-noise stream of one phase.
pub fn phase_rng(seed: u64, phase_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phase_index as u64);
    rng
}

/// Empty residual model with the scenario's initial hyperparameters.
pub fn initial_model(sc: &Scenario) -> Result<MultiGp> {
    MultiGp::new(vec![sc.gp.initial.clone(); sc.joints()], sc.gp.budget, sc.gp.eviction)
}

/// Runs one training phase, feeding every residual target to `gp` as it arrives.
pub fn run_training_phase(
    sc: &Scenario,
    phase_index: usize,
    cursor: &mut SimCursor,
    gp: &mut MultiGp,
    seed: u64,
) -> Result<(TrainingSet, PhaseLog)> {
    let phase = &sc.phases[phase_index];
    if phase.kind != PhaseKind::Training {
        return Err(Error::Domain(format!("phase {} is not a training phase", phase_index + 1)));
    }
    let log = simulate_phase(sc, phase, cursor)?;
    if log.truth.iter().any(|x| x.rows(4 * sc.joints(), sc.joints()).iter().any(|&v| v != 0.0)) {
        return Err(Error::Domain("active torque during a training phase".into()));
    }
    let measured = measure(&log.samples, sc.dt(), &sc.noise, &mut phase_rng(seed, phase_index));
    let mut data = TrainingSet::new(sc.joints());
    for s in &measured {
        let z = s.z();
        let y = residual_target(&sc.params, s);
        if z.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training sample"));
        }
        gp.push(z.as_slice(), y.as_slice())?;
        data.push(s.t, z, y);
    }
    Ok((data, log))
}

/// Fits each output's hyperparameters on the retained points and reconditions.
pub fn optimize_model(sc: &Scenario, gp: &MultiGp) -> Result<(MultiGp, Vec<OptimizationResult>)> {
    if !sc.gp.optimize || gp.is_empty() {
        return Ok((gp.clone(), Vec::new()));
    }
    let inputs = gp.inputs();
    let targets = gp.targets();
    let mut hypers: Vec<Hyperparameters> = Vec::with_capacity(gp.outputs());
    let mut results = Vec::with_capacity(gp.outputs());
    for (m, init) in gp.hyperparameters().iter().enumerate() {
        let mut cfg = sc.gp.optimizer.clone();
        cfg.seed = cfg.seed.wrapping_add(m as u64);
        let res = optimize_hyperparameters(&inputs, &targets.column(m).into_owned(), init, &cfg)?;
        hypers.push(res.hyper.clone());
        results.push(res);
    }
    Ok((gp.with_hyperparameters(hypers)?, results))
}

/// Feeds a recorded training stream, in order, to a fresh budgeted model.
pub fn replay(data: &TrainingSet, hypers: Vec<Hyperparameters>, sc: &Scenario) -> Result<MultiGp> {
    let mut gp = MultiGp::new(hypers, sc.gp.budget, sc.gp.eviction)?;
    for (z, y) in data.z.iter().zip(&data.y) {
        gp.push(z.as_slice(), y.as_slice())?;
    }
    Ok(gp)
}

/// Everything the training phases produce.
#[derive(Debug, Clone)]
pub struct Trained {
    pub dataset: TrainingSet,
    pub gp: MultiGp,
    pub optimization: Vec<OptimizationResult>,
    pub logs: Vec<PhaseLog>,
    /// Simulation state at the start of the first estimation phase.
    pub cursor: SimCursor,
}

/// All training phases followed by the single hyperparameter fit.
pub fn train(sc: &Scenario, seed: u64) -> Result<Trained> {
    let mut cursor = SimCursor::initial(sc)?;
    let mut gp = initial_model(sc)?;
    let mut dataset = TrainingSet::new(sc.joints());
    let mut logs = Vec::new();
    for (i, phase) in sc.phases.iter().enumerate() {
        if phase.kind != PhaseKind::Training {
            break;
        }
        let (data, log) = run_training_phase(sc, i, &mut cursor, &mut gp, seed)?;
        for k in 0..data.len() {
            dataset.push(data.t[k], data.z[k].clone(), data.y[k].clone());
        }
        logs.push(log);
    }
    let (fitted, optimization) = optimize_model(sc, &gp)?;
    // Budget decisions made under the initial kernel are revisited under the
    // fitted one by replaying the recorded stream.
    let gp = if optimization.is_empty() {
        fitted
    } else {
        replay(&dataset, fitted.hyperparameters(), sc)?
    };
    Ok(Trained {
        dataset,
        gp,
        optimization,
        logs,
        cursor,
    })
}

/// Simulates every phase from the initial state without learning anything.
pub fn simulate_all(sc: &Scenario) -> Result<Vec<(usize, PhaseLog)>> {
    let mut cursor = SimCursor::initial(sc)?;
    sc.phases
        .iter()
        .enumerate()
        .map(|(i, p)| Ok((i, simulate_phase(sc, p, &mut cursor)?)))
        .collect()
}

/// Simulates every estimation phase from `cursor` (noise-free plant samples).
pub fn simulate_estimation(sc: &Scenario, cursor: &SimCursor) -> Result<Vec<(usize, PhaseLog)>> {
    let mut cursor = cursor.clone();
    sc.phases
        .iter()
        .enumerate()
        .filter(|(_, p)| p.kind == PhaseKind::Estimation)
        .map(|(i, p)| Ok((i, simulate_phase(sc, p, &mut cursor)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Estimator {
    GpAkf,
    Akf,
    Spring,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::GpAkf, Estimator::Akf, Estimator::Spring];

    /// File-name tag.
    pub fn tag(self) -> &'static str {
        match self {
            Estimator::GpAkf => "gpakf",
            Estimator::Akf => "akf",
            Estimator::Spring => "spring",
        }
    }

    /// Column label in summaries.
    pub fn label(self) -> &'static str {
        match self {
            Estimator::GpAkf => "GP-AKF",
            Estimator::Akf => "AKF",
            Estimator::Spring => "Spring torque",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.tag() == s)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One estimate of the active torque.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub t: f64,
    pub tau_true: DVector<f64>,
    pub tau_hat: DVector<f64>,
    /// Filter variance of the torque; zero for the spring reading.
    pub tau_var: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct EstimationOutput {
    pub traces: BTreeMap<Estimator, Vec<EstimateRow>>,
    /// Confidence-set samples aligned with the GP-AKF rows.
    pub bounds: Vec<BoundSample>,
    pub metrics: RunMetrics,
}

/// Runs the selected estimators over the given phase logs on one shared
/// measurement realisation drawn from `seed`.
pub fn estimate(
    sc: &Scenario,
    logs: &[(usize, PhaseLog)],
    gp: &dyn ResidualModel,
    estimators: &[Estimator],
    seed: u64,
) -> Result<EstimationOutput> {
    let n = sc.joints();
    let dt = sc.dt();
    let mut exact: Vec<&KinematicsSample> = Vec::new();
    let mut truth: Vec<&DVector<f64>> = Vec::new();
    let mut measured: Vec<KinematicsSample> = Vec::new();
    for (i, log) in logs {
        measured.extend(measure(&log.samples, dt, &sc.noise, &mut phase_rng(seed, *i)));
        exact.extend(log.samples.iter());
        truth.extend(log.truth.iter());
    }
    if measured.is_empty() {
        return Err(Error::Domain("estimation phases produced no samples".into()));
    }
    let ys: Vec<DVector<f64>> = measured.iter().map(observation).collect();
    let torque_true = |k: usize| truth[k].rows(4 * n, n).into_owned();

    let mut cfg = FilterConfig::from_diagonals(
        n,
        dt,
        &sc.filter.measurement_noise,
        &sc.filter.process_noise,
        sc.filter.torque_prior_variance,
        &ys[0],
    )?;
    cfg.joseph = sc.filter.joseph;

    let mut traces = BTreeMap::new();
    let mut bounds = Vec::new();
    let has = |e: Estimator| estimators.contains(&e);
    let row = |k: usize, fs: &FilterState| EstimateRow {
        t: exact[k].t,
        tau_true: torque_true(k),
        tau_hat: fs.torque(),
        tau_var: fs.torque_variance(),
    };

    if has(Estimator::GpAkf) {
        let mut fs = FilterState::initial(&cfg);
        let mut rows = vec![row(0, &fs)];
        let mut tracker = if sc.bounds.enabled {
            Some(BoundTracker::new(sc.bounds.config.clone(), &cfg, &sc.params, gp)?)
        } else {
            None
        };
        if let Some(tr) = &tracker {
            bounds.push(tr.sample(exact[0].t, Some(truth[0])));
        }
        for k in 1..ys.len() {
            let u = &exact[k].tau_m;
            let (next, record) = match sc.filter.acceleration {
                AccelerationInput::Model => gp_akf_step(&cfg, &fs, u, &ys[k], &sc.params, gp)?,
                AccelerationInput::Measured => {
                    gp_akf_step_measured(&cfg, &fs, u, &ys[k], &sc.params, gp, &measured[k - 1].q_ddot)?
                }
            };
            fs = next;
            rows.push(row(k, &fs));
            if let Some(tr) = tracker.as_mut() {
                tr.step(&record, &ys[k])?;
                bounds.push(tr.sample(exact[k].t, Some(truth[k])));
            }
        }
        traces.insert(Estimator::GpAkf, rows);
    }
    if has(Estimator::Akf) {
        let mut fs = FilterState::initial(&cfg);
        let mut rows = vec![row(0, &fs)];
        for k in 1..ys.len() {
            fs = akf_step(&cfg, &fs, &exact[k].tau_m, &ys[k], &sc.params)?.0;
            rows.push(row(k, &fs));
        }
        traces.insert(Estimator::Akf, rows);
    }
    if has(Estimator::Spring) {
        let rows = (0..ys.len())
            .map(|k| EstimateRow {
                t: exact[k].t,
                tau_true: torque_true(k),
                tau_hat: spring_torque_estimate(
                    &sc.params,
                    &ys[k].rows(n, n).into_owned(),
                    &ys[k].rows(3 * n, n).into_owned(),
                ),
                tau_var: DVector::zeros(n),
            })
            .collect();
        traces.insert(Estimator::Spring, rows);
    }
    let metrics = RunMetrics::compute(&traces, &bounds);
    Ok(EstimationOutput { traces, bounds, metrics })
}

/// Simulates and estimates one estimation phase starting from `cursor`.
pub fn run_estimation_phase(
    sc: &Scenario,
    phase_index: usize,
    cursor: &mut SimCursor,
    gp: &dyn ResidualModel,
    estimators: &[Estimator],
    seed: u64,
) -> Result<EstimationOutput> {
    let phase = &sc.phases[phase_index];
    if phase.kind != PhaseKind::Estimation {
        return Err(Error::Domain(format!("phase {} is not an estimation phase", phase_index + 1)));
    }
    let log = simulate_phase(sc, phase, cursor)?;
    estimate(sc, &[(phase_index, log)], gp, estimators, seed)
}

/// Training, hyperparameter fit and every estimation phase of a scenario.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: String,
    pub seed: u64,
    pub trained: Trained,
    pub estimation: EstimationOutput,
}

pub fn full_run(sc: &Scenario, seed: u64, estimators: &[Estimator]) -> Result<RunOutput> {
    let trained = train(sc, seed)?;
    let logs = simulate_estimation(sc, &trained.cursor)?;
    let estimation = estimate(sc, &logs, &trained.gp, estimators, seed)?;
    Ok(RunOutput {
        scenario: sc.name.clone(),
        seed,
        trained,
        estimation,
    })
}
