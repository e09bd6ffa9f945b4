use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pfmatch::eval::{Matcher, Scoring, SweepAxis, DEFAULT_HOLDOUT_FRACTION, DEFAULT_TRIALS};
use pfmatch::filter::Resampling;
use pfmatch::{FilterParams, SimConfig};

#[derive(Debug, Parser)]
#[command(
    name = "pfmatch",
    version,
    about = "Particle-filter map matching of GPS trajectories"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Match a trajectory and write ranked candidate paths.
    Match(MatchArgs),
    /// Hold out fixes, match the rest, and score the held-out fixes.
    Eval(EvalArgs),
    /// Degrade a trajectory at several levels and compare the filter with the baseline.
    Sweep(SweepArgs),
    /// Drive a simulated vehicle over a network and emit noisy fixes.
    Simulate(SimulateArgs),
    /// Downsample and/or add position noise to a trajectory (downsampling first).
    Perturb(PerturbArgs),
}

/// Filter parameters. Defaults match `FilterParams::default()`.
#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    /// Number of particles.
    #[arg(long, default_value_t = 1_000)]
    pub particle_count: usize,
    /// Std-dev of the initial position draw, meters per axis.
    #[arg(long, default_value_t = 10.0)]
    pub init_pos_sigma: f64,
    /// Std-dev of the initial bearing draw, degrees.
    #[arg(long, default_value_t = 20.0)]
    pub init_bearing_sigma: f64,
    /// The first fix must have an edge within this many meters.
    #[arg(long, default_value_t = 50.0)]
    pub init_radius: f64,
    /// Largest accepted bearing/heading difference at initialisation, degrees.
    #[arg(long, default_value_t = 90.0)]
    pub bearing_gate: f64,
    /// Initial draws within this many meters of an edge are snapped onto it.
    #[arg(long, default_value_t = 2.0)]
    pub snap_tolerance: f64,
    /// Floor of the travel-distance std-dev, meters.
    #[arg(long, default_value_t = 2.0)]
    pub transition_sigma: f64,
    /// Travel-distance std-dev as a fraction of the distance between fixes.
    #[arg(long, default_value_t = 0.2)]
    pub transition_sigma_scale: f64,
    /// Std-dev of the measurement likelihood, meters.
    #[arg(long, default_value_t = 5.0)]
    pub measurement_sigma: f64,
    /// Let particles turn back onto the reverse edge at nodes with other exits.
    #[arg(long)]
    pub allow_uturn: bool,
    #[arg(long, value_enum, default_value_t = ResamplingArg::EveryStep)]
    pub resampling: ResamplingArg,
    /// Random seed; equal seeds give byte-identical outputs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl FilterArgs {
    pub fn params(&self) -> FilterParams {
        FilterParams {
            particle_count: self.particle_count,
            init_pos_sigma: self.init_pos_sigma,
            init_bearing_sigma: self.init_bearing_sigma,
            init_radius: self.init_radius,
            bearing_gate: self.bearing_gate,
            snap_tolerance: self.snap_tolerance,
            transition_sigma: self.transition_sigma,
            transition_sigma_scale: self.transition_sigma_scale,
            measurement_sigma: self.measurement_sigma,
            allow_uturn: self.allow_uturn,
            resampling: self.resampling.into(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ResamplingArg {
    EveryStep,
    Adaptive,
}

impl From<ResamplingArg> for Resampling {
    fn from(r: ResamplingArg) -> Self {
        match r {
            ResamplingArg::EveryStep => Resampling::EveryStep,
            ResamplingArg::Adaptive => Resampling::Adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoringArg {
    /// Distance to the most probable candidate.
    Top,
    /// Probability-weighted distance over all candidates.
    Mixture,
}

impl From<ScoringArg> for Scoring {
    fn from(s: ScoringArg) -> Self {
        match s {
            ScoringArg::Top => Scoring::TopCandidate,
            ScoringArg::Mixture => Scoring::Mixture,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatcherArg {
    ParticleFilter,
    Baseline,
}

impl From<MatcherArg> for Matcher {
    fn from(m: MatcherArg) -> Self {
        match m {
            MatcherArg::ParticleFilter => Matcher::ParticleFilter,
            MatcherArg::Baseline => Matcher::Baseline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    /// Levels are position noise std-devs in meters.
    Noise,
    /// Levels are sampling intervals in seconds.
    Interval,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Noise => SweepAxis::NoiseSigma,
            AxisArg::Interval => SweepAxis::SamplingInterval,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Inputs {
    /// Road network GeoJSON.
    #[arg(long)]
    pub network: PathBuf,
    /// Trajectory CSV (timestamp,lat,lon,bearing).
    #[arg(long)]
    pub trajectory: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Candidate paths as GeoJSON.
    #[arg(long)]
    pub output: PathBuf,
    /// Full match result as JSON.
    #[arg(long)]
    pub report: PathBuf,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Evaluation report JSON.
    #[arg(long)]
    pub output: PathBuf,
    /// Share of fixes held out, in (0, 0.5).
    #[arg(long, default_value_t = DEFAULT_HOLDOUT_FRACTION)]
    pub holdout_fraction: f64,
    #[arg(long, value_enum, default_value_t = MatcherArg::ParticleFilter)]
    pub matcher: MatcherArg,
    #[arg(long, value_enum, default_value_t = ScoringArg::Top)]
    pub scoring: ScoringArg,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Sweep report JSON.
    #[arg(long)]
    pub output: PathBuf,
    /// Pooled per-point errors as CSV.
    #[arg(long)]
    pub errors_csv: PathBuf,
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// Comma-separated levels, e.g. 5,10,20.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub levels: Vec<f64>,
    /// Trials per level.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    /// Share of fixes held out in each trial, in (0, 0.5).
    #[arg(long, default_value_t = DEFAULT_HOLDOUT_FRACTION)]
    pub holdout_fraction: f64,
    /// Position noise added after downsampling on the interval axis, meters.
    #[arg(long, default_value_t = 0.0)]
    pub interval_noise: f64,
    /// Raise the measurement sigma to at least each level's position noise.
    #[arg(long)]
    pub match_measurement_sigma: bool,
    #[arg(long, value_enum, default_value_t = ScoringArg::Top)]
    pub scoring: ScoringArg,
    #[command(flatten)]
    pub filter: FilterArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Road network GeoJSON.
    #[arg(long)]
    pub network: PathBuf,
    /// Trajectory CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Ground truth JSON.
    #[arg(long)]
    pub truth: PathBuf,
    /// Meters per second.
    #[arg(long, default_value_t = 10.0)]
    pub speed: f64,
    /// Seconds.
    #[arg(long, default_value_t = 200.0)]
    pub duration: f64,
    /// Seconds between fixes.
    #[arg(long, default_value_t = 1.0)]
    pub sample_interval: f64,
    /// Per-axis position noise std-dev, meters.
    #[arg(long, default_value_t = 5.0)]
    pub noise_sigma: f64,
    /// Bearing noise std-dev, degrees.
    #[arg(long, default_value_t = 10.0)]
    pub bearing_noise_sigma: f64,
    /// Let the vehicle turn back at nodes with other exits.
    #[arg(long)]
    pub allow_uturn: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SimulateArgs {
    pub fn config(&self) -> SimConfig {
        SimConfig {
            speed: self.speed,
            duration: self.duration,
            sample_interval: self.sample_interval,
            noise_sigma: self.noise_sigma,
            bearing_noise_sigma: self.bearing_noise_sigma,
            allow_uturn: self.allow_uturn,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Input trajectory CSV.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Output trajectory CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Per-axis position noise std-dev, meters.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Keep fixes at least this many seconds apart (first and last always kept).
    #[arg(long)]
    pub interval: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
