//! Simulated re-creation of the passive-tracking and static-resistance
//! experiments: references, controllers, sensors, phase orchestration,
//! metrics, CSV records and Monte-Carlo batching.

mod metrics;
mod monte_carlo;
mod pid;
mod profile;
mod records;
mod run;
mod scenario;
mod sensors;
mod trajectory;

pub use metrics::{mean_offset, rmse, RunMetrics};
pub use monte_carlo::{binomial_margin, monte_carlo, write_monte_carlo, McRun, McSummary, MeanStd};
pub use pid::{Pid, PidGains};
pub use profile::{resistance_profile, resistance_profile_scaled, static_compensation};
pub use records::{
    eval_dir, parse_record_file_name, write_hyperparameters, write_plant_log, read_records, read_trace, record_file_name, write_plotdata, write_records,
    write_summary, RunRecords,
};
pub use run::{
    estimate, full_run, initial_model, optimize_model, phase_rng, replay, run_estimation_phase, run_training_phase,
    simulate_all, simulate_estimation, simulate_phase, train, EstimateRow, EstimationOutput, Estimator, PhaseLog,
    RunOutput, SimCursor, Trained,
};
pub use scenario::{
    AccelerationInput, ActiveTorque, BoundSettings, Controller, FilterSettings, GpSettings, Phase, PhaseKind,
    ReferenceSignal, Scenario,
};
pub use sensors::{
    central_difference, measure, moving_average, observation, smoothed_derivative, NoiseConfig,
    SensorMode,
};
pub use trajectory::{sigmoid_trajectory, Reference, SigmoidTrajectory};
