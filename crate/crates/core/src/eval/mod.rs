//! Holdout cross-validation and sensitivity sweeps.
//!
//! A fraction of the fixes is removed, the rest is matched, and each removed
//! fix is scored by its distance to the matched path. Sweeps repeat this over
//! degraded copies of a trajectory (more noise, or sparser sampling) for both
//! the particle filter and a deterministic [`baseline_match`].

mod baseline;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{run_filter, CandidatePath, FilterError, FilterParams};
use crate::geo::{point_segment_projection, GeoError, PlanarPoint};
use crate::rng;
use crate::roadnet::{EdgeId, NetworkError, RoadNetwork};
use crate::trajectory::{downsample, perturb, split_holdout, GpsPoint, HoldoutSplit, Trajectory, TrajectoryError};

pub use baseline::{baseline_match, BaselineError, BASELINE_SNAP_RADIUS};

pub const DEFAULT_HOLDOUT_FRACTION: f64 = 0.1;
pub const DEFAULT_TRIALS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("empty path")]
    EmptyPath,
    #[error("no points held out of a {0}-point trajectory")]
    NothingHeldOut(usize),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("particle filter failed on the training points: {0}")]
    Filter(#[from] FilterError),
    #[error("baseline failed on the training points: {0}")]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    #[default]
    ParticleFilter,
    Baseline,
}

/// How a held-out fix is scored against a match result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    /// Distance to the most likely candidate.
    #[default]
    TopCandidate,
    /// Probability-weighted mean distance over all candidates.
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    /// Index of the held-out fix in the evaluated trajectory.
    pub index: usize,
    /// Meters.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub matcher: Matcher,
    pub errors: Vec<PointError>,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub mean: f64,
    pub recovery_events: usize,
    /// Filter configuration; `None` for the baseline.
    pub params: Option<FilterParams>,
}

impl EvalReport {
    fn from_errors(
        matcher: Matcher,
        errors: Vec<PointError>,
        recovery_events: usize,
        params: Option<FilterParams>,
    ) -> EvalReport {
        let mut sorted: Vec<f64> = errors.iter().map(|e| e.distance).collect();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        EvalReport {
            matcher,
            p25: percentile(&sorted, 0.25),
            p50: percentile(&sorted, 0.50),
            p75: percentile(&sorted, 0.75),
            mean,
            errors,
            recovery_events,
            params,
        }
    }
}

/// Percentile of ascending `sorted` data by linear interpolation between
/// order statistics, `q` in [0, 1]. NaN for empty input.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// Shortest distance from `p` to a polyline. A single vertex is a point.
pub fn distance_to_polyline(p: PlanarPoint, polyline: &[PlanarPoint]) -> Result<f64, EvalError> {
    match polyline {
        [] => Err(EvalError::EmptyPath),
        [only] => Ok(crate::geo::planar_distance(p, *only)),
        _ => Ok(polyline
            .windows(2)
            .map(|w| point_segment_projection(p, w[0], w[1]).dist)
            .fold(f64::INFINITY, f64::min)),
    }
}

/// Distance from a fix to the geometry of an edge sequence.
pub fn distance_to_path(net: &RoadNetwork, p: &GpsPoint, edges: &[EdgeId]) -> Result<f64, EvalError> {
    if edges.is_empty() {
        return Err(EvalError::EmptyPath);
    }
    let q = net.projection().project(p.position)?;
    distance_to_polyline(q, &net.path_polyline(edges)?)
}

/// Options for [`crossvalidate_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub matcher: Matcher,
    pub params: FilterParams,
    pub fraction: f64,
    pub scoring: Scoring,
}

impl CrossValidation {
    pub fn new(params: FilterParams) -> Self {
        CrossValidation {
            matcher: Matcher::ParticleFilter,
            params,
            fraction: DEFAULT_HOLDOUT_FRACTION,
            scoring: Scoring::TopCandidate,
        }
    }
}

/// Particle-filter cross-validation scored against the top candidate.
pub fn crossvalidate<R: Rng + ?Sized>(
    net: &RoadNetwork,
    traj: &Trajectory,
    params: &FilterParams,
    fraction: f64,
    rng: &mut R,
) -> Result<EvalReport, EvalError> {
    let cv = CrossValidation {
        fraction,
        ..CrossValidation::new(params.clone())
    };
    crossvalidate_with(net, traj, &cv, rng)
}

pub fn crossvalidate_with<R: Rng + ?Sized>(
    net: &RoadNetwork,
    traj: &Trajectory,
    cv: &CrossValidation,
    rng: &mut R,
) -> Result<EvalReport, EvalError> {
    Ok(crossvalidate_detailed(net, traj, cv, rng)?.report)
}

/// A cross-validation report together with the candidates it scored.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidationRun {
    pub report: EvalReport,
    /// Candidates matched on the training points, most likely first.
    pub candidates: Vec<CandidatePath>,
    pub split: HoldoutSplit,
}

pub fn crossvalidate_detailed<R: Rng + ?Sized>(
    net: &RoadNetwork,
    traj: &Trajectory,
    cv: &CrossValidation,
    rng: &mut R,
) -> Result<CrossValidationRun, EvalError> {
    let split = split_holdout(traj, cv.fraction, rng)?;
    let (report, candidates) = evaluate_split(net, &split, cv)?;
    Ok(CrossValidationRun {
        report,
        candidates,
        split,
    })
}

fn evaluate_split(
    net: &RoadNetwork,
    split: &HoldoutSplit,
    cv: &CrossValidation,
) -> Result<(EvalReport, Vec<CandidatePath>), EvalError> {
    if split.test.is_empty() {
        return Err(EvalError::NothingHeldOut(split.train.len()));
    }
    let (candidates, recovery_events) = match cv.matcher {
        Matcher::ParticleFilter => {
            let r = run_filter(net, &split.train, &cv.params)?;
            (r.candidates, r.recovery_events)
        }
        Matcher::Baseline => (vec![baseline_match(net, &split.train)?], 0),
    };
    let scored: Vec<&CandidatePath> = match cv.scoring {
        Scoring::TopCandidate => candidates.iter().take(1).collect(),
        Scoring::Mixture => candidates.iter().collect(),
    };
    let proj = net.projection();
    let polylines = scored
        .iter()
        .map(|c| net.path_polyline(&c.edges))
        .collect::<Result<Vec<_>, _>>()?;
    let mut errors = Vec::with_capacity(split.test.len());
    for &(index, p) in &split.test {
        let q = proj.project(p.position)?;
        let distance = match cv.scoring {
            Scoring::TopCandidate => distance_to_polyline(q, &polylines[0])?,
            Scoring::Mixture => {
                let mut sum = 0.0;
                for (c, poly) in scored.iter().zip(&polylines) {
                    sum += c.probability * distance_to_polyline(q, poly)?;
                }
                sum
            }
        };
        errors.push(PointError { index, distance });
    }
    let params = (cv.matcher == Matcher::ParticleFilter).then(|| cv.params.clone());
    Ok((
        EvalReport::from_errors(cv.matcher, errors, recovery_events, params),
        candidates,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Level is the per-axis std-dev of added position noise, meters.
    NoiseSigma,
    /// Level is the minimum spacing between kept fixes, seconds.
    SamplingInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub levels: Vec<f64>,
    pub trials: usize,
    pub fraction: f64,
    pub scoring: Scoring,
    /// Position noise added after downsampling on the interval axis, meters.
    pub interval_noise: f64,
    /// Raise `measurement_sigma` to at least the position noise of each
    /// degraded trajectory.
    pub match_measurement_sigma: bool,
}

impl SweepConfig {
    pub fn new(axis: SweepAxis, levels: Vec<f64>) -> Self {
        SweepConfig {
            axis,
            levels,
            trials: DEFAULT_TRIALS,
            fraction: DEFAULT_HOLDOUT_FRACTION,
            scoring: Scoring::TopCandidate,
            interval_noise: 0.0,
            match_measurement_sigma: false,
        }
    }

    /// Position noise sigma of the degraded trajectory at `level`.
    pub fn noise_at(&self, level: f64) -> f64 {
        match self.axis {
            SweepAxis::NoiseSigma => level,
            SweepAxis::SamplingInterval => self.interval_noise,
        }
    }

    /// Filter parameters used at `level`.
    pub fn params_at(&self, params: &FilterParams, level: f64) -> FilterParams {
        if !self.match_measurement_sigma {
            return params.clone();
        }
        FilterParams {
            measurement_sigma: params.measurement_sigma.max(self.noise_at(level)),
            ..params.clone()
        }
    }

    fn validate(&self) -> Result<(), EvalError> {
        if self.levels.is_empty() {
            return Err(EvalError::InvalidSweep("no levels given".into()));
        }
        if self.trials == 0 {
            return Err(EvalError::InvalidSweep("trials must be at least 1".into()));
        }
        if !(self.fraction > 0.0 && self.fraction < 0.5) {
            return Err(EvalError::InvalidSweep(format!(
                "holdout fraction must lie in (0, 0.5), got {}",
                self.fraction
            )));
        }
        for &l in &self.levels {
            let ok = match self.axis {
                SweepAxis::NoiseSigma => l.is_finite() && l >= 0.0,
                SweepAxis::SamplingInterval => l.is_finite() && l > 0.0,
            };
            if !ok {
                return Err(EvalError::InvalidSweep(format!("invalid level {l}")));
            }
        }
        if !(self.interval_noise.is_finite() && self.interval_noise >= 0.0) {
            return Err(EvalError::InvalidSweep(format!(
                "interval noise must be non-negative, got {}",
                self.interval_noise
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

/// Pooled outcome of one matcher at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherLevel {
    /// Errors pooled over successful trials; `None` when every trial failed.
    pub report: Option<EvalReport>,
    pub failures: Vec<TrialFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: f64,
    pub particle_filter: MatcherLevel,
    pub baseline: MatcherLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub levels: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub results: Vec<LevelReport>,
}

impl SweepReport {
    /// Filter median per level, `None` where no trial succeeded.
    pub fn filter_p50(&self) -> Vec<Option<f64>> {
        self.results
            .iter()
            .map(|l| l.particle_filter.report.as_ref().map(|r| r.p50))
            .collect()
    }

    pub fn baseline_p50(&self) -> Vec<Option<f64>> {
        self.results
            .iter()
            .map(|l| l.baseline.report.as_ref().map(|r| r.p50))
            .collect()
    }
}

// Stream phases for per-trial randomness.
const PHASE_DEGRADE: u64 = 1;
const PHASE_SPLIT: u64 = 2;

type TrialOutcome = (Result<EvalReport, String>, Result<EvalReport, String>);

fn run_trial(
    net: &RoadNetwork,
    base: &Trajectory,
    params: &FilterParams,
    cfg: &SweepConfig,
    level: f64,
    trial_seed: u64,
) -> TrialOutcome {
    let prepared = (|| -> Result<HoldoutSplit, EvalError> {
        let mut degrade_rng = rng::stream(&[trial_seed, PHASE_DEGRADE]);
        let degraded = match cfg.axis {
            SweepAxis::NoiseSigma => perturb(base, level, &mut degrade_rng)?,
            SweepAxis::SamplingInterval => perturb(&downsample(base, level)?, cfg.interval_noise, &mut degrade_rng)?,
        };
        Ok(split_holdout(
            &degraded,
            cfg.fraction,
            &mut rng::stream(&[trial_seed, PHASE_SPLIT]),
        )?)
    })();
    let split = match prepared {
        Ok(s) => s,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let run = |matcher| {
        let cv = CrossValidation {
            matcher,
            params: FilterParams {
                seed: trial_seed,
                ..params.clone()
            },
            fraction: cfg.fraction,
            scoring: cfg.scoring,
        };
        evaluate_split(net, &split, &cv)
            .map(|(report, _)| report)
            .map_err(|e| e.to_string())
    };
    (run(Matcher::ParticleFilter), run(Matcher::Baseline))
}

fn pool(matcher: Matcher, outcomes: Vec<(usize, Result<EvalReport, String>)>, params: &FilterParams) -> MatcherLevel {
    let mut errors = Vec::new();
    let mut recoveries = 0;
    let mut failures = Vec::new();
    for (trial, outcome) in outcomes {
        match outcome {
            Ok(r) => {
                errors.extend(r.errors);
                recoveries += r.recovery_events;
            }
            Err(message) => failures.push(TrialFailure { trial, message }),
        }
    }
    let params = (matcher == Matcher::ParticleFilter).then(|| params.clone());
    MatcherLevel {
        report: (!errors.is_empty()).then(|| EvalReport::from_errors(matcher, errors, recoveries, params)),
        failures,
    }
}

/// Cross-validates degraded copies of `base` at every level, `cfg.trials`
/// times each, for the particle filter and the baseline. Both matchers see
/// the same degraded trajectory and split in every trial. Trial seeds derive
/// from one value drawn from `rng`; failures are recorded per level.
pub fn sweep<R: Rng + ?Sized>(
    net: &RoadNetwork,
    base: &Trajectory,
    params: &FilterParams,
    cfg: &SweepConfig,
    rng: &mut R,
) -> Result<SweepReport, EvalError> {
    cfg.validate()?;
    params.validate()?;
    let seed: u64 = rng.random();
    let jobs: Vec<(usize, usize)> = (0..cfg.levels.len())
        .flat_map(|l| (0..cfg.trials).map(move |t| (l, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(l, t)| {
            let trial_seed = rng::derive_seed(&[seed, l as u64, t as u64]);
            run_trial(
                net,
                base,
                &cfg.params_at(params, cfg.levels[l]),
                cfg,
                cfg.levels[l],
                trial_seed,
            )
        })
        .collect();

    let mut results = Vec::with_capacity(cfg.levels.len());
    let mut outcomes = outcomes.into_iter();
    for &level in &cfg.levels {
        let mut pf = Vec::with_capacity(cfg.trials);
        let mut bl = Vec::with_capacity(cfg.trials);
        for t in 0..cfg.trials {
            let (a, b) = outcomes.next().expect("one outcome per job");
            pf.push((t, a));
            bl.push((t, b));
        }
        results.push(LevelReport {
            level,
            particle_filter: pool(Matcher::ParticleFilter, pf, &cfg.params_at(params, level)),
            baseline: pool(Matcher::Baseline, bl, params),
        });
    }
    Ok(SweepReport {
        axis: cfg.axis,
        levels: cfg.levels.clone(),
        trials: cfg.trials,
        seed,
        results,
    })
}

/// Pooled errors of a sweep as CSV: `axis,level,matcher,index,distance`.
pub fn sweep_errors_csv(report: &SweepReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["axis", "level", "matcher", "index", "distance"])
        .expect("write to memory");
    let axis = match report.axis {
        SweepAxis::NoiseSigma => "noise_sigma",
        SweepAxis::SamplingInterval => "sampling_interval",
    };
    for l in &report.results {
        for (name, m) in [("particle_filter", &l.particle_filter), ("baseline", &l.baseline)] {
            if let Some(r) = &m.report {
                for e in &r.errors {
                    w.write_record([
                        axis.to_string(),
                        l.level.to_string(),
                        name.to_string(),
                        e.index.to_string(),
                        e.distance.to_string(),
                    ])
                    .expect("write to memory");
                }
            }
        }
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}
