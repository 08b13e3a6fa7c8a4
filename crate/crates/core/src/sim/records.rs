//! CSV records of estimation runs: writing, reading back, re-evaluation and
//! plot-ready bands.
//!
//! One file per estimator and run is named `<scenario>_<tag>_<seed>.csv`, and
//! each run also gets `<scenario>_summary_<seed>.csv`. The column layout is
//! documented in `docs/formats.md`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use super::metrics::RunMetrics;
use super::run::{phase_rng, EstimateRow, EstimationOutput, Estimator, PhaseLog};
use super::scenario::{PhaseKind, Scenario};
use super::sensors::measure;
use crate::dynamics::KinematicsSample;
use crate::gp::{MultiGp, OptimizationResult};
use crate::bounds::BoundSample;
use crate::{Error, Result};

pub const SUMMARY_TAG: &str = "summary";
pub const PLOT_SUFFIX: &str = "_plot";

/// `<scenario>_<tag>_<seed>.csv`
pub fn record_file_name(scenario: &str, tag: &str, seed: u64) -> String {
    format!("{scenario}_{tag}_{seed}.csv")
}

/// Splits a record file name into scenario, estimator and seed. Anything
/// else (summaries, plot files, foreign files) yields `None`.
pub fn parse_record_file_name(name: &str) -> Option<(String, Estimator, u64)> {
    let stem = name.strip_suffix(".csv")?;
    let (rest, seed) = stem.rsplit_once('_')?;
    let (scenario, tag) = rest.rsplit_once('_')?;
    if scenario.is_empty() || seed.is_empty() || !seed.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((scenario.to_string(), Estimator::from_tag(tag)?, seed.parse().ok()?))
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn flag(f: Option<bool>) -> String {
    match f {
        Some(true) => "1".into(),
        Some(false) => "0".into(),
        None => String::new(),
    }
}

fn joint_columns(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(format!("{}: {e}", path.display())),
        _ => Error::Parse {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        },
    }
}

fn write_rows(path: &Path, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

fn trace_header(n: usize, with_bounds: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(joint_columns("tau_true", n));
    h.extend(joint_columns("tau_hat", n));
    h.extend(joint_columns("tau_var", n));
    if with_bounds {
        h.extend(joint_columns("bound_center", n));
        h.extend(joint_columns("bound_radius", n));
        h.extend(["means_trace", "scale", "covered", "torque_covered"].map(String::from));
    }
    h
}

fn write_trace(path: &Path, rows: &[EstimateRow], bounds: Option<&[BoundSample]>) -> Result<()> {
    let n = rows.first().map_or(0, |r| r.tau_hat.len());
    if let Some(b) = bounds {
        if b.len() != rows.len() {
            return Err(Error::Dimension(format!("{} bound samples for {} rows", b.len(), rows.len())));
        }
    }
    let body = rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let mut rec = vec![num(r.t)];
            rec.extend(r.tau_true.iter().map(|&v| num(v)));
            rec.extend(r.tau_hat.iter().map(|&v| num(v)));
            rec.extend(r.tau_var.iter().map(|&v| num(v)));
            if let Some(b) = bounds {
                let b = &b[k];
                rec.extend(b.torque_center.iter().map(|&v| num(v)));
                rec.extend(b.torque_radius.iter().map(|&v| num(v)));
                rec.push(num(b.means_trace));
                rec.push(num(b.scale));
                rec.push(flag(b.covered));
                rec.push(flag(b.torque_covered));
            }
            rec
        })
        .collect();
    write_rows(path, trace_header(n, bounds.is_some()), body)
}

fn summary_cell(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes one trace file per estimator plus the run summary into `dir`.
/// The GP-AKF file carries the bound columns when bounds were tracked.
pub fn write_records(dir: &Path, scenario: &str, seed: u64, out: &EstimationOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (e, rows) in &out.traces {
        let path = dir.join(record_file_name(scenario, e.tag(), seed));
        let bounds = (*e == Estimator::GpAkf && !out.bounds.is_empty()).then_some(out.bounds.as_slice());
        write_trace(&path, rows, bounds)?;
        written.push(path);
    }
    let path = dir.join(record_file_name(scenario, SUMMARY_TAG, seed));
    write_summary(&path, &out.metrics)?;
    written.push(path);
    Ok(written)
}

/// Table with an `RMSE [Nm]` row and one column per estimator. Bound
/// statistics only fill the GP-AKF column.
pub fn write_summary(path: &Path, m: &RunMetrics) -> Result<()> {
    let estimators: Vec<Estimator> = m.rmse.keys().copied().collect();
    let mut header = vec![String::new()];
    header.extend(estimators.iter().map(|e| e.label().to_string()));
    let row = |name: &str, f: &dyn Fn(Estimator) -> String| {
        let mut r = vec![name.to_string()];
        r.extend(estimators.iter().map(|&e| f(e)));
        r
    };
    let gp_only = |v: Option<f64>| move |e: Estimator| if e == Estimator::GpAkf { summary_cell(v) } else { String::new() };
    let rows = vec![
        row("RMSE [Nm]", &|e| num(m.rmse[&e])),
        row("Coverage", &gp_only(m.coverage_rate)),
        row("Torque coverage", &gp_only(m.torque_coverage_rate)),
        row("Mean bound radius [Nm]", &gp_only(m.mean_torque_radius)),
        row("Steps", &|_| m.steps.to_string()),
    ];
    write_rows(path, header, rows)
}

const SIGNALS: [&str; 7] = ["q", "q_dot", "q_ddot", "theta_m", "theta_m_dot", "theta_m_ddot", "tau_m"];

fn signals(s: &KinematicsSample) -> [&DVector<f64>; 7] {
    [&s.q, &s.q_dot, &s.q_ddot, &s.theta_m, &s.theta_m_dot, &s.theta_m_ddot, &s.tau_m]
}

/// Writes the simulated plant: true signals, the reference, the true active
/// torque and the measured signals drawn from `seed`, one row per sample.
pub fn write_plant_log(path: &Path, sc: &Scenario, logs: &[(usize, PhaseLog)], seed: u64) -> Result<()> {
    let n = sc.joints();
    let mut header = vec!["t".to_string(), "phase".to_string(), "kind".to_string()];
    for name in SIGNALS {
        header.extend(joint_columns(name, n));
    }
    header.extend(joint_columns("q_ref", n));
    header.extend(joint_columns("tau_act", n));
    for name in SIGNALS {
        header.extend(joint_columns(&format!("meas_{name}"), n).collect::<Vec<_>>());
    }
    let mut body = Vec::new();
    for (i, log) in logs {
        let measured = measure(&log.samples, sc.dt(), &sc.noise, &mut phase_rng(seed, *i));
        let kind = match log.kind {
            PhaseKind::Training => "training",
            PhaseKind::Estimation => "estimation",
        };
        for (k, s) in log.samples.iter().enumerate() {
            let mut rec = vec![num(s.t), (i + 1).to_string(), kind.to_string()];
            for v in signals(s) {
                rec.extend(v.iter().map(|&x| num(x)));
            }
            rec.extend(log.reference[k].iter().map(|&x| num(x)));
            rec.extend(log.truth[k].rows(4 * n, n).iter().map(|&x| num(x)));
            for v in signals(&measured[k]) {
                rec.extend(v.iter().map(|&x| num(x)));
            }
            body.push(rec);
        }
    }
    write_rows(path, header, body)
}

/// One row per GP output: fitted hyperparameters and, when a fit ran, the
/// log marginal likelihood before and after.
pub fn write_hyperparameters(path: &Path, gp: &MultiGp, fits: &[OptimizationResult]) -> Result<()> {
    let hypers = gp.hyperparameters();
    let rho = gp.input_dim();
    let mut header = vec!["output".to_string(), "sigma_f".to_string()];
    header.extend(joint_columns("lengthscale", rho));
    header.extend(["sigma_on", "lml", "initial_lml", "retained"].map(String::from));
    let body = hypers
        .iter()
        .enumerate()
        .map(|(m, h)| {
            let mut rec = vec![(m + 1).to_string(), num(h.sigma_f)];
            rec.extend(h.lengthscales.iter().map(|&l| num(l)));
            rec.push(num(h.sigma_on));
            let fit = fits.get(m);
            rec.push(summary_cell(fit.map(|f| f.lml)));
            rec.push(summary_cell(fit.map(|f| f.initial_lml)));
            rec.push(gp.len().to_string());
            rec
        })
        .collect();
    write_rows(path, header, body)
}

/// Contents of one run recovered from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecords {
    pub scenario: String,
    pub seed: u64,
    pub traces: BTreeMap<Estimator, Vec<EstimateRow>>,
    pub bounds: Vec<BoundSample>,
}

impl RunRecords {
    pub fn metrics(&self) -> RunMetrics {
        RunMetrics::compute(&self.traces, &self.bounds)
    }
}

struct Parser<'a> {
    path: &'a Path,
    line: u64,
}

impl Parser<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.display().to_string(),
            line: self.line,
            message: message.into(),
        }
    }

    fn float(&self, field: &str, column: &str) -> Result<f64> {
        field
            .trim()
            .parse()
            .map_err(|_| self.err(format!("column {column}: cannot parse {field:?} as a number")))
    }

    fn flag(&self, field: &str, column: &str) -> Result<Option<bool>> {
        match field.trim() {
            "" => Ok(None),
            "1" => Ok(Some(true)),
            "0" => Ok(Some(false)),
            other => Err(self.err(format!("column {column}: expected 0, 1 or empty, got {other:?}"))),
        }
    }
}

/// Reads a trace file; the bound samples are empty unless the bound columns are present.
pub fn read_trace(path: &Path) -> Result<(Vec<EstimateRow>, Vec<BoundSample>)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let p = Parser { path, line: 1 };
    if header.len() < 4 || header[0] != "t" {
        return Err(p.err("missing or malformed header"));
    }
    let plain = (header.len() - 1) / 3;
    let bounded = header.len().saturating_sub(5) / 5;
    let (n, with_bounds) = if plain > 0 && header == trace_header(plain, false) {
        (plain, false)
    } else if bounded > 0 && header == trace_header(bounded, true) {
        (bounded, true)
    } else {
        return Err(p.err(format!("unexpected columns: {}", header.join(","))));
    };

    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let p = Parser {
            path,
            line: rec.position().map_or(0, |pos| pos.line()),
        };
        if rec.len() != header.len() {
            return Err(p.err(format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let mut vals = Vec::with_capacity(rec.len());
        let numeric = if with_bounds { rec.len() - 2 } else { rec.len() };
        for (i, field) in rec.iter().take(numeric).enumerate() {
            vals.push(p.float(field, &header[i])?);
        }
        let block = |b: usize| DVector::from_column_slice(&vals[1 + b * n..1 + (b + 1) * n]);
        rows.push(EstimateRow {
            t: vals[0],
            tau_true: block(0),
            tau_hat: block(1),
            tau_var: block(2),
        });
        if with_bounds {
            let c = rec.len();
            bounds.push(BoundSample {
                t: vals[0],
                torque_center: block(3),
                torque_radius: block(4),
                means_trace: vals[1 + 5 * n],
                scale: vals[2 + 5 * n],
                covered: p.flag(&rec[c - 2], &header[c - 2])?,
                torque_covered: p.flag(&rec[c - 1], &header[c - 1])?,
            });
        }
    }
    if rows.is_empty() {
        return Err(p.err("no data rows"));
    }
    Ok((rows, bounds))
}

/// Reads every run found in `dir`, grouped by scenario and seed.
pub fn read_records(dir: &Path) -> Result<Vec<RunRecords>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(key) = parse_record_file_name(&name) {
            files.push((key, entry.path()));
        }
    }
    if files.is_empty() {
        return Err(Error::Parse {
            path: dir.display().to_string(),
            line: 0,
            message: "no record files found".into(),
        });
    }
    files.sort();

    let mut runs: BTreeMap<(String, u64), RunRecords> = BTreeMap::new();
    for ((scenario, estimator, seed), path) in files {
        let (rows, bounds) = read_trace(&path)?;
        let run = runs.entry((scenario.clone(), seed)).or_insert_with(|| RunRecords {
            scenario,
            seed,
            traces: BTreeMap::new(),
            bounds: Vec::new(),
        });
        if !bounds.is_empty() {
            run.bounds = bounds;
        }
        run.traces.insert(estimator, rows);
    }
    Ok(runs.into_values().collect())
}

/// Recomputes the metrics of every run in `dir` from the files alone.
pub fn eval_dir(dir: &Path) -> Result<Vec<(RunRecords, RunMetrics)>> {
    Ok(read_records(dir)?
        .into_iter()
        .map(|r| {
            let m = r.metrics();
            (r, m)
        })
        .collect())
}

/// Writes `<scenario>_<tag>_<seed>_plot.csv` per estimator: the estimate with
/// its ±2σ band from the filter variance and, for GP-AKF, the bound interval.
pub fn write_plotdata(runs: &[RunRecords], outdir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(outdir)?;
    let mut written = Vec::new();
    for run in runs {
        for (e, rows) in &run.traces {
            let n = rows.first().map_or(0, |r| r.tau_hat.len());
            let with_bounds = *e == Estimator::GpAkf && run.bounds.len() == rows.len();
            let mut header = vec!["t".to_string()];
            for i in 1..=n {
                header.extend(
                    ["tau_true", "tau_hat", "lower_2sigma", "upper_2sigma"]
                        .iter()
                        .map(|c| format!("{c}_{i}")),
                );
                if with_bounds {
                    header.extend(["bound_lower", "bound_upper"].iter().map(|c| format!("{c}_{i}")));
                }
            }
            let body = rows
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    let mut rec = vec![num(r.t)];
                    for i in 0..n {
                        let half = 2.0 * r.tau_var[i].max(0.0).sqrt();
                        rec.extend([r.tau_true[i], r.tau_hat[i], r.tau_hat[i] - half, r.tau_hat[i] + half].map(num));
                        if with_bounds {
                            let b = &run.bounds[k];
                            let (c, rho) = (b.torque_center[i], b.torque_radius[i]);
                            rec.extend([c - rho, c + rho].map(num));
                        }
                    }
                    rec
                })
                .collect();
            let name = format!("{}_{}_{}{PLOT_SUFFIX}.csv", run.scenario, e.tag(), run.seed);
            let path = outdir.join(name);
            write_rows(&path, header, body)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn output(with_bounds: bool) -> EstimationOutput {
        let row = |k: usize| EstimateRow {
            t: k as f64 * 0.01,
            tau_true: DVector::from_element(1, (k as f64 * 0.3).sin()),
            tau_hat: DVector::from_element(1, (k as f64 * 0.3).sin() + 0.1 / (k as f64 + 1.0)),
            tau_var: DVector::from_element(1, 1.0 / (k as f64 + 3.0)),
        };
        let mut traces = BTreeMap::new();
        for e in Estimator::ALL {
            traces.insert(e, (0..20).map(row).collect::<Vec<_>>());
        }
        let bounds = if with_bounds {
            (0..20)
                .map(|k| BoundSample {
                    t: k as f64 * 0.01,
                    torque_center: DVector::from_element(1, 0.1 * k as f64),
                    torque_radius: DVector::from_element(1, 1.0 / 3.0),
                    means_trace: 1e-7 * k as f64,
                    scale: 11.070497693516312,
                    covered: Some(k % 7 != 3),
                    torque_covered: Some(true),
                })
                .collect()
        } else {
            Vec::new()
        };
        let metrics = RunMetrics::compute(&traces, &bounds);
        EstimationOutput { traces, bounds, metrics }
    }

    #[test]
    fn file_names_round_trip() {
        let name = record_file_name("passive.toy", "gpakf", 42);
        assert_eq!(name, "passive.toy_gpakf_42.csv");
        assert_eq!(parse_record_file_name(&name), Some(("passive.toy".into(), Estimator::GpAkf, 42)));
        assert_eq!(
            parse_record_file_name("my_scene_spring_7.csv"),
            Some(("my_scene".into(), Estimator::Spring, 7))
        );
        assert_eq!(parse_record_file_name("passive.toy_summary_42.csv"), None);
        assert_eq!(parse_record_file_name("passive.toy_gpakf_42_plot.csv"), None);
        assert_eq!(parse_record_file_name("notes.txt"), None);
    }

    #[test]
    fn records_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let out = output(true);
        let files = write_records(dir.path(), "unit", 3, &out).unwrap();
        assert_eq!(files.len(), 4);
        let runs = read_records(dir.path()).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].traces, out.traces);
        assert_eq!(runs[0].bounds, out.bounds);
        assert_eq!(runs[0].metrics(), out.metrics);
    }

    #[test]
    fn traces_without_bounds_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let out = output(false);
        write_records(dir.path(), "unit", 3, &out).unwrap();
        let (rows, bounds) = read_trace(&dir.path().join("unit_gpakf_3.csv")).unwrap();
        assert_eq!(rows, out.traces[&Estimator::GpAkf]);
        assert!(bounds.is_empty());
    }

    #[test]
    fn summary_mirrors_the_rmse_table() {
        let dir = tempfile::tempdir().unwrap();
        let out = output(true);
        write_records(dir.path(), "unit", 3, &out).unwrap();
        let text = fs::read_to_string(dir.path().join("unit_summary_3.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(",GP-AKF,AKF,Spring torque"));
        let rmse: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(rmse[0], "RMSE [Nm]");
        assert_eq!(rmse[1].parse::<f64>().unwrap(), out.metrics.rmse[&Estimator::GpAkf]);
        let cov: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(cov, ["Coverage", &num(out.metrics.coverage_rate.unwrap()), "", ""]);
    }

    #[test]
    fn truncated_row_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        write_records(dir.path(), "unit", 3, &output(false)).unwrap();
        let path = dir.path().join("unit_akf_3.csv");
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let cut = lines[5].rsplit_once(',').unwrap().0.to_string();
        lines[5] = cut;
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        match read_records(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x_akf_1.csv");
        fs::write(&path, "t,tau_true_1,tau_hat_1,tau_var_1\n0,1,2,3\n0.01,1,abc,3\n").unwrap();
        match read_trace(&path) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("tau_hat_1"));
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_directory_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("readme.txt"), "nothing here").unwrap();
        assert!(matches!(read_records(dir.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn header_only_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x_akf_1.csv");
        fs::write(&path, "t,tau_true_1,tau_hat_1,tau_var_1\n").unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Parse { .. })));
        fs::write(&path, "time,a,b,c\n0,1,2,3\n").unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn plot_bands_are_two_sigma() {
        let dir = tempfile::tempdir().unwrap();
        let out = output(true);
        write_records(dir.path(), "unit", 3, &out).unwrap();
        let runs = read_records(dir.path()).unwrap();
        let plot = tempfile::tempdir().unwrap();
        let files = write_plotdata(&runs, plot.path()).unwrap();
        assert_eq!(files.len(), 3);
        let text = fs::read_to_string(plot.path().join("unit_gpakf_3_plot.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("t,tau_true_1,tau_hat_1,lower_2sigma_1,upper_2sigma_1,bound_lower_1,bound_upper_1")
        );
        let rows = &out.traces[&Estimator::GpAkf];
        let mut count = 0;
        for (k, line) in lines.enumerate() {
            let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            let half = 2.0 * rows[k].tau_var[0].sqrt();
            assert!(((v[4] - v[3]) / 2.0 - half).abs() < 1e-12);
            assert!(((v[6] - v[5]) / 2.0 - out.bounds[k].torque_radius[0]).abs() < 1e-12);
            count += 1;
        }
        assert_eq!(count, rows.len());
    }
}
