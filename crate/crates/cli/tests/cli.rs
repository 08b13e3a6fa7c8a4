use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Mutex;

use gpakf::sim::{full_run, read_records, write_records, Estimator, Scenario};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gpakf"));
    c.env_remove("GPAKF_OUT_DIR").env_remove("GPAKF_JOBS");
    c
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// The bundled passive scenario cut down to one training segment and one
/// second of estimation.
fn short_scenario(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(bundled("passive.toy.toml")).unwrap();
    let text = text
        .replace("name = \"passive.toy\"", "name = \"short\"")
        .replace("duration_s = 21.0", "duration_s = 3.5")
        .replace("duration_s = 7.0", "duration_s = 1.0");
    let path = dir.join("short.toml");
    fs::write(&path, text).unwrap();
    path
}

/// One child at a time, so the runtime check measures only its own process.
static SERIAL: Mutex<()> = Mutex::new(());

fn run(cmd: &mut Command) -> Output {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn missing_scenario_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = run(bin().args(["full-run", "does-not-exist.toml", "--out"]).arg(&out_dir));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=config"));
    assert!(!out_dir.exists());
}

#[test]
fn invalid_scenario_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    let text = fs::read_to_string(bundled("passive.toy.toml")).unwrap();
    fs::write(&path, text.replace("kp = 80.0", "kp = -1.0")).unwrap();
    let out_dir = tmp.path().join("out");
    let out = run(bin().arg("estimate").arg(&path).arg("--out").arg(&out_dir));
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());

    fs::write(&path, text.replace("[pid]", "[pid]\nunknown_gain = 1.0")).unwrap();
    let out = run(bin().arg("train").arg(&path).arg("--out").arg(&out_dir));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_run_is_deterministic_and_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let sc_path = short_scenario(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = run(bin().arg("full-run").arg(&sc_path).arg("--out").arg(dir));
        assert!(out.status.success());
    }
    let names = listing(&a);
    assert_eq!(names, ["short_akf_7.csv", "short_gpakf_7.csv", "short_spring_7.csv", "short_summary_7.csv"]);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n} differs");
    }

    let sc = Scenario::from_file(&sc_path).unwrap();
    let lib = tmp.path().join("lib");
    let r = {
        let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
        full_run(&sc, 7, &Estimator::ALL).unwrap()
    };
    write_records(&lib, &sc.name, 7, &r.estimation).unwrap();
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(lib.join(n)).unwrap(), "{n} differs from library");
    }

    // eval reproduces the in-memory metrics from the files alone.
    let out = run(bin().arg("eval").arg(&a));
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "short");
    assert_eq!(row[1], "7");
    let m = &r.estimation.metrics;
    for (i, e) in Estimator::ALL.iter().enumerate() {
        let v: f64 = row[2 + i].parse().unwrap();
        assert!((v - m.rmse[e]).abs() <= 1e-12);
    }
    let cov: f64 = row[5].parse().unwrap();
    assert!((cov - m.coverage_rate.unwrap()).abs() <= 1e-12);

    // An independent two-pass RMSE over the exported GP-AKF file.
    let text = fs::read_to_string(a.join("short_gpakf_7.csv")).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').take(3).map(|s| s.parse().unwrap()).collect();
            (f[1], f[2])
        })
        .collect();
    let n = rows.len() as f64;
    let mean_sq: f64 = rows.iter().map(|(t, h)| (h - t).powi(2)).sum::<f64>() / n;
    assert!((mean_sq.sqrt() - m.rmse[&Estimator::GpAkf]).abs() < 1e-12);

    // plotdata keeps one row per record row.
    let plot = tmp.path().join("plot");
    let out = run(bin().arg("plotdata").arg(&a).arg("--out").arg(&plot));
    assert!(out.status.success());
    assert_eq!(
        listing(&plot),
        ["short_akf_7_plot.csv", "short_gpakf_7_plot.csv", "short_spring_7_plot.csv"]
    );
    let plotted = fs::read_to_string(plot.join("short_gpakf_7_plot.csv")).unwrap();
    assert_eq!(plotted.lines().count(), text.lines().count());
}

#[test]
fn eval_rejects_empty_and_truncated_records() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = run(bin().arg("eval").arg(&empty));
    assert_eq!(out.status.code(), Some(4));

    let dir = tmp.path().join("rec");
    fs::create_dir(&dir).unwrap();
    fs::write(
        dir.join("x_akf_1.csv"),
        "t,tau_true_1,tau_hat_1,tau_var_1\n0e0,0e0,1e0,1e0\n1e-2,0e0,1e0\n",
    )
    .unwrap();
    let out = run(bin().arg("eval").arg(&dir));
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("x_akf_1.csv:3"), "{err}");

    let out = run(bin().arg("plotdata").arg(&empty).arg("--out").arg(tmp.path().join("p")));
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn estimator_selection_and_out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let sc_path = short_scenario(tmp.path());
    let env_out = tmp.path().join("env_out");
    let out = run(
        bin()
            .env("GPAKF_OUT_DIR", &env_out)
            .arg("estimate")
            .arg(&sc_path)
            .args(["--estimators", "akf,spring", "--seed", "11"]),
    );
    assert!(out.status.success());
    assert_eq!(listing(&env_out), ["short_akf_11.csv", "short_spring_11.csv", "short_summary_11.csv"]);
    let runs = read_records(&env_out).unwrap();
    assert_eq!(runs[0].seed, 11);
    assert!(runs[0].bounds.is_empty());

    let out = run(bin().arg("estimate").arg(&sc_path).args(["--estimators", "kalman"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bounds_writes_the_gp_akf_record_with_bound_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let sc_path = short_scenario(tmp.path());
    let dir = tmp.path().join("o");
    let out = run(bin().arg("bounds").arg(&sc_path).arg("--out").arg(&dir));
    assert!(out.status.success());
    assert_eq!(listing(&dir), ["short_gpakf_7.csv", "short_summary_7.csv"]);
    let runs = read_records(&dir).unwrap();
    assert_eq!(runs[0].bounds.len(), runs[0].traces[&Estimator::GpAkf].len());
}

#[test]
fn simulate_and_train_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let sc_path = short_scenario(tmp.path());
    let dir = tmp.path().join("o");
    assert!(run(bin().arg("simulate").arg(&sc_path).arg("--out").arg(&dir)).status.success());
    assert!(run(bin().arg("train").arg(&sc_path).arg("--out").arg(&dir)).status.success());
    assert_eq!(listing(&dir), ["short_hyper_7.csv", "short_plant_7.csv", "short_training_7.csv"]);

    let plant = fs::read_to_string(dir.join("short_plant_7.csv")).unwrap();
    // 350 training and 100 estimation samples.
    assert_eq!(plant.lines().count(), 1 + 450);
    assert!(plant.lines().next().unwrap().starts_with("t,phase,kind,q_1,"));
    let training = fs::read_to_string(dir.join("short_training_7.csv")).unwrap();
    assert_eq!(training.lines().count(), 1 + 350);
    let hyper = fs::read_to_string(dir.join("short_hyper_7.csv")).unwrap();
    assert_eq!(
        hyper.lines().next(),
        Some("output,sigma_f,lengthscale_1,lengthscale_2,lengthscale_3,sigma_on,lml,initial_lml,retained")
    );
}

#[test]
fn monte_carlo_does_not_depend_on_the_job_count() {
    let tmp = tempfile::tempdir().unwrap();
    let sc_path = short_scenario(tmp.path());
    let one = tmp.path().join("one");
    let two = tmp.path().join("two");
    let a = run(bin().arg("monte-carlo").arg(&sc_path).args(["--runs", "3", "--jobs", "1", "--out"]).arg(&one));
    let b = run(
        bin()
            .env("GPAKF_JOBS", "2")
            .arg("monte-carlo")
            .arg(&sc_path)
            .args(["--runs", "3", "--out"])
            .arg(&two),
    );
    assert!(a.status.success() && b.status.success());
    let names = listing(&one);
    assert_eq!(names, ["short_montecarlo_7.csv", "short_montecarlo_summary_7.csv"]);
    for n in &names {
        assert_eq!(fs::read(one.join(n)).unwrap(), fs::read(two.join(n)).unwrap());
    }
    let table = fs::read_to_string(one.join("short_montecarlo_7.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);

    let out = run(bin().arg("monte-carlo").arg(&sc_path).args(["--runs", "0"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bundled_passive_scenario_runs_within_a_minute() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cmd = bin();
    cmd.arg("full-run").arg(bundled("passive.toy.toml")).arg("--out").arg(tmp.path());
    let (out, secs) = {
        let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
        let start = std::time::Instant::now();
        (cmd.output().unwrap(), start.elapsed().as_secs_f64())
    };
    assert!(out.status.success());
    assert!(secs < 60.0, "{secs} s");
    assert_eq!(listing(tmp.path()).len(), 4);
    let summary = fs::read_to_string(tmp.path().join("passive.toy_summary_7.csv")).unwrap();
    let rmse: Vec<f64> = summary.lines().nth(1).unwrap().split(',').skip(1).map(|s| s.parse().unwrap()).collect();
    // Columns: GP-AKF, AKF, spring torque.
    assert!(rmse[0] < rmse[2] && rmse[2] < rmse[1], "{rmse:?}");
}
