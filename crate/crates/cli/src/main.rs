//! `gpakf`: run the simulated SEA experiments, export records and re-evaluate them.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or usage,
//! 3 numerical failure, 4 malformed record file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpakf::sim::{
    estimate, eval_dir, monte_carlo, read_records, record_file_name, simulate_all, simulate_estimation, train,
    write_hyperparameters, write_monte_carlo, write_plant_log, write_plotdata, write_records, Estimator,
    RunMetrics, Scenario,
};
use gpakf::Error;

#[derive(Parser)]
#[command(name = "gpakf", version, about = "GP-enhanced torque estimation for series elastic actuators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every phase of a scenario and write the plant signals.
    Simulate(RunArgs),
    /// Run the training phases, fit the GP and write the dataset and hyperparameters.
    Train(RunArgs),
    /// Train, then run the selected estimators without confidence bounds.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated subset of gpakf, akf, spring.
        #[arg(long, value_delimiter = ',', value_parser = parse_estimator, default_value = "gpakf,akf,spring")]
        estimators: Vec<Estimator>,
    },
    /// Train, then run GP-AKF with its confidence-set recursion.
    Bounds(RunArgs),
    /// Training, fitting, every estimator and the bounds, with CSV records and a summary.
    FullRun(RunArgs),
    /// Recompute metrics from the record files in a directory.
    Eval {
        records: PathBuf,
    },
    /// Turn record files into plot-ready bands.
    Plotdata {
        records: PathBuf,
        #[arg(long, env = "GPAKF_OUT_DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Replicate the estimation phase over independent noise seeds.
    MonteCarlo {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Worker threads; 0 uses one per core.
        #[arg(long, env = "GPAKF_JOBS", default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    #[arg(long, env = "GPAKF_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    Estimator::from_tag(s.trim()).ok_or_else(|| format!("unknown estimator {s:?} (expected gpakf, akf or spring)"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 1,
        Error::Config(_) => 2,
        Error::Parse { .. } => 4,
        Error::SingularInertia { .. }
        | Error::NonFinite(_)
        | Error::Factorization { .. }
        | Error::InnovationSingular
        | Error::Domain(_)
        | Error::Dimension(_) => 3,
    }
}

fn kind(e: &Error) -> &'static str {
    match exit_code(e) {
        1 => "io",
        2 => "config",
        4 => "parse",
        _ => "numerical",
    }
}

/// Loads and validates the scenario before anything touches the output directory.
fn load(args: &RunArgs) -> Result<(Scenario, u64), Error> {
    let sc = Scenario::from_file(&args.scenario)?;
    let seed = args.seed.unwrap_or(sc.seed);
    Ok((sc, seed))
}

fn create_out(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn print_metrics(scenario: &str, seed: u64, m: &RunMetrics) {
    let rmse: Vec<String> = m.rmse.iter().map(|(e, v)| format!("{e} {v:.4}")).collect();
    println!("{scenario} seed {seed}: RMSE [Nm] {}", rmse.join(", "));
    if m.coverage_rate.is_some() {
        println!(
            "  coverage {} torque coverage {} mean torque radius {} Nm",
            fmt_opt(m.coverage_rate),
            fmt_opt(m.torque_coverage_rate),
            fmt_opt(m.mean_torque_radius)
        );
    }
}

fn estimation(args: &RunArgs, estimators: &[Estimator], bounds: Option<bool>) -> Result<(), Error> {
    let (mut sc, seed) = load(args)?;
    if let Some(b) = bounds {
        sc.bounds.enabled = b;
    }
    create_out(&args.out)?;
    log::info!("training {}", sc.name);
    let trained = train(&sc, seed)?;
    let logs = simulate_estimation(&sc, &trained.cursor)?;
    log::info!("estimating {} steps", logs.iter().map(|(_, l)| l.samples.len()).sum::<usize>());
    let out = estimate(&sc, &logs, &trained.gp, estimators, seed)?;
    report(&write_records(&args.out, &sc.name, seed, &out)?);
    print_metrics(&sc.name, seed, &out.metrics);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => {
            let (sc, seed) = load(&args)?;
            create_out(&args.out)?;
            let logs = simulate_all(&sc)?;
            let path = args.out.join(record_file_name(&sc.name, "plant", seed));
            write_plant_log(&path, &sc, &logs, seed)?;
            report(&[path]);
        }
        Command::Train(args) => {
            let (sc, seed) = load(&args)?;
            create_out(&args.out)?;
            let trained = train(&sc, seed)?;
            let data = args.out.join(record_file_name(&sc.name, "training", seed));
            trained.dataset.write_csv(&data)?;
            let hyper = args.out.join(record_file_name(&sc.name, "hyper", seed));
            write_hyperparameters(&hyper, &trained.gp, &trained.optimization)?;
            report(&[data, hyper]);
            println!(
                "{} samples, {} retained by the model",
                trained.dataset.len(),
                trained.gp.len()
            );
        }
        Command::Estimate { run, estimators } => estimation(&run, &estimators, Some(false))?,
        Command::Bounds(args) => estimation(&args, &[Estimator::GpAkf], Some(true))?,
        Command::FullRun(args) => estimation(&args, &Estimator::ALL, None)?,
        Command::Eval { records } => {
            println!("scenario,seed,rmse_gpakf,rmse_akf,rmse_spring,coverage,torque_coverage,mean_torque_radius,steps");
            let cell = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
            for (r, m) in eval_dir(&records)? {
                let rmse = |e: Estimator| cell(m.rmse.get(&e).copied());
                println!(
                    "{},{},{},{},{},{},{},{},{}",
                    r.scenario,
                    r.seed,
                    rmse(Estimator::GpAkf),
                    rmse(Estimator::Akf),
                    rmse(Estimator::Spring),
                    cell(m.coverage_rate),
                    cell(m.torque_coverage_rate),
                    cell(m.mean_torque_radius),
                    m.steps
                );
            }
        }
        Command::Plotdata { records, out } => {
            let runs = read_records(&records)?;
            create_out(&out)?;
            report(&write_plotdata(&runs, &out)?);
        }
        Command::MonteCarlo { run, runs, jobs } => {
            let (sc, seed) = load(&run)?;
            if runs == 0 {
                return Err(Error::Config("--runs must be at least 1".into()));
            }
            create_out(&run.out)?;
            let summary = monte_carlo(&sc, runs, seed, &Estimator::ALL, jobs)?;
            report(&write_monte_carlo(&run.out, &summary)?);
            for (e, ms) in &summary.rmse {
                println!("{e}: RMSE mean {:.4} std {:.4} Nm", ms.mean, ms.std);
            }
            println!(
                "pooled coverage {} torque coverage {} over {} steps",
                fmt_opt(summary.pooled_coverage),
                fmt_opt(summary.pooled_torque_coverage),
                summary.bound_steps
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error kind={} exit={code}: {e}", kind(&e));
            ExitCode::from(code)
        }
    }
}
