//! Command implementations behind the `pfmatch` binary.
//!
//! Exit codes: 0 success, 1 bad input or flags, 2 matching or simulation
//! failure, 3 partial result (simulation stopped at a dead end).

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use pfmatch::eval::{crossvalidate_with, sweep, sweep_errors_csv, CrossValidation, EvalError, SweepConfig};
use pfmatch::roadnet::{parse_network_geojson, DEFAULT_GRID_CELL};
use pfmatch::simulate::{simulate_seeded, SimError};
use pfmatch::trajectory::{downsample, holdout_count, parse_trajectory, perturb};
use pfmatch::{rng, run_filter, FilterError, MatchResult, RoadNetwork, Trajectory};

pub mod args;

use args::{Cli, Command, EvalArgs, MatchArgs, PerturbArgs, SimulateArgs, SweepArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Failure(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Outputs were written but cover less than was asked for.
    Partial(String),
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Done => 0,
            Outcome::Partial(_) => 3,
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Match(a) => cmd_match(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Perturb(a) => cmd_perturb(&a),
    }
}

fn read_text(path: &Path, what: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {what} {}: {e}", path.display())))
}

pub fn load_network(path: &Path) -> Result<RoadNetwork, CliError> {
    let text = read_text(path, "network")?;
    parse_network_geojson(&text, DEFAULT_GRID_CELL)
        .map_err(|e| CliError::Input(format!("invalid network {}: {e}", path.display())))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let text = read_text(path, "trajectory")?;
    parse_trajectory(&text).map_err(|e| CliError::Input(format!("invalid trajectory {}: {e}", path.display())))
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::Input(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn filter_error(e: FilterError) -> CliError {
    match e {
        FilterError::InvalidParams(_) => CliError::Input(e.to_string()),
        _ => CliError::Failure(e.to_string()),
    }
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::Filter(f) => filter_error(f),
        EvalError::InvalidSweep(_) | EvalError::Trajectory(_) => CliError::Input(e.to_string()),
        _ => CliError::Failure(e.to_string()),
    }
}

fn check_fraction(fraction: f64) -> Result<(), CliError> {
    if fraction > 0.0 && fraction < 0.5 {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "--holdout-fraction must lie in (0, 0.5), got {fraction}"
        )))
    }
}

/// Candidate paths as a GeoJSON FeatureCollection, most probable first.
pub fn candidates_geojson(net: &RoadNetwork, result: &MatchResult) -> Result<Value, CliError> {
    let mut features = Vec::with_capacity(result.candidates.len());
    for (i, c) in result.candidates.iter().enumerate() {
        let coords: Vec<[f64; 2]> = net
            .path_geometry(&c.edges)
            .map_err(|e| CliError::Failure(e.to_string()))?
            .into_iter()
            .map(|p| [p.lon, p.lat])
            .collect();
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "LineString", "coordinates": coords },
            "properties": {
                "rank": i + 1,
                "probability": c.probability,
                "support": c.support,
                "edge_ids": c.edges,
            },
        }));
    }
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}

pub fn cmd_match(a: &MatchArgs) -> Result<Outcome, CliError> {
    let params = a.filter.params();
    params.validate().map_err(filter_error)?;
    let net = load_network(&a.inputs.network)?;
    let traj = load_trajectory(&a.inputs.trajectory)?;
    let result = run_filter(&net, &traj, &params).map_err(filter_error)?;
    write_json(&a.output, &candidates_geojson(&net, &result)?)?;
    write_json(&a.report, &result)?;
    if result.is_segmented() {
        eprintln!(
            "warning: {} recovery event(s); candidates start at point {}",
            result.recovery_events, result.segment_start
        );
    }
    Ok(Outcome::Done)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<Outcome, CliError> {
    let params = a.filter.params();
    params.validate().map_err(filter_error)?;
    check_fraction(a.holdout_fraction)?;
    let net = load_network(&a.inputs.network)?;
    let traj = load_trajectory(&a.inputs.trajectory)?;
    let held = holdout_count(traj.len(), a.holdout_fraction);
    if held == 0 || traj.len() - held < 2 {
        return Err(CliError::Input(format!(
            "trajectory of {} points is too short for holdout fraction {}",
            traj.len(),
            a.holdout_fraction
        )));
    }
    let cv = CrossValidation {
        matcher: a.matcher.into(),
        params: params.clone(),
        fraction: a.holdout_fraction,
        scoring: a.scoring.into(),
    };
    let report = crossvalidate_with(&net, &traj, &cv, &mut rng::stream(&[params.seed])).map_err(eval_error)?;
    write_json(&a.output, &report)?;
    println!(
        "p25 {:.2} m  p50 {:.2} m  p75 {:.2} m  mean {:.2} m  ({} held-out points, {} recovery events)",
        report.p25,
        report.p50,
        report.p75,
        report.mean,
        report.errors.len(),
        report.recovery_events
    );
    Ok(Outcome::Done)
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<Outcome, CliError> {
    let params = a.filter.params();
    params.validate().map_err(filter_error)?;
    check_fraction(a.holdout_fraction)?;
    let cfg = SweepConfig {
        trials: a.trials,
        fraction: a.holdout_fraction,
        scoring: a.scoring.into(),
        interval_noise: a.interval_noise,
        match_measurement_sigma: a.match_measurement_sigma,
        ..SweepConfig::new(a.axis.into(), a.levels.clone())
    };
    let net = load_network(&a.inputs.network)?;
    let traj = load_trajectory(&a.inputs.trajectory)?;
    let report = sweep(&net, &traj, &params, &cfg, &mut rng::stream(&[params.seed])).map_err(eval_error)?;
    write_json(&a.output, &report)?;
    write_atomic(&a.errors_csv, sweep_errors_csv(&report).as_bytes())?;
    let fmt = |v: Vec<Option<f64>>| {
        v.iter()
            .map(|x| x.map_or("n/a".into(), |x| format!("{x:.2}")))
            .collect::<Vec<String>>()
            .join(", ")
    };
    println!("levels: {}", fmt(a.levels.iter().map(|&l| Some(l)).collect()));
    println!("particle filter p50: {}", fmt(report.filter_p50()));
    println!("baseline p50: {}", fmt(report.baseline_p50()));
    let failed: usize = report
        .results
        .iter()
        .map(|l| l.particle_filter.failures.len() + l.baseline.failures.len())
        .sum();
    if failed > 0 {
        eprintln!("warning: {failed} trial(s) failed; see the failures recorded in the report");
    }
    Ok(Outcome::Done)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome, CliError> {
    let cfg = a.config();
    cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let net = load_network(&a.network)?;
    let (traj, truth) = simulate_seeded(&net, &cfg).map_err(|e| match e {
        SimError::InvalidConfig(_) | SimError::EmptyNetwork => CliError::Input(e.to_string()),
        _ => CliError::Failure(e.to_string()),
    })?;
    write_atomic(&a.output, traj.to_csv_string().as_bytes())?;
    write_json(&a.truth, &truth)?;
    if truth.truncated {
        return Ok(Outcome::Partial(format!(
            "vehicle reached a dead end: {} of {} fixes written",
            traj.len(),
            cfg.sample_count()
        )));
    }
    Ok(Outcome::Done)
}

pub fn cmd_perturb(a: &PerturbArgs) -> Result<Outcome, CliError> {
    if a.noise_sigma.is_none() && a.interval.is_none() {
        return Err(CliError::Input("give --noise-sigma and/or --interval".into()));
    }
    let input = load_trajectory(&a.trajectory)?;
    let bad = |e: pfmatch::trajectory::TrajectoryError| CliError::Input(e.to_string());
    let mut traj = match a.interval {
        Some(i) => downsample(&input, i).map_err(bad)?,
        None => input,
    };
    if let Some(sigma) = a.noise_sigma {
        traj = perturb(&traj, sigma, &mut rng::stream(&[a.seed])).map_err(bad)?;
    }
    if traj.len() < 2 {
        return Err(CliError::Input(format!(
            "result has {} point(s); at least 2 needed",
            traj.len()
        )));
    }
    write_atomic(&a.output, traj.to_csv_string().as_bytes())?;
    Ok(Outcome::Done)
}
