//! Particle-filter map matching.
//!
//! Each particle is a position on the directed network plus the sequence of
//! edges it has entered. A run follows the bootstrap recursion:
//!
//! 1. [`initialize`] draws positions and bearings around the first fix and
//!    keeps the draws that land on a road heading the same way.
//! 2. For every later fix, [`propagate`] moves each particle by the
//!    inter-fix distance plus Gaussian noise, branching at intersections;
//!    [`weigh`] applies the Gaussian measurement likelihood; [`resample`]
//!    draws a fresh equally weighted population.
//! 3. [`extract_paths`] groups the final particles by history. The
//!    probability of a path is the fraction of particles that followed it.
//!
//! Randomness is keyed by `(seed, step, phase, particle)` so results do not
//! depend on thread scheduling.

mod history;
pub mod oracle;

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{angle_difference, planar_distance, GeoError, LocalProjection, PlanarPoint};
use crate::rng::{self, StreamRng};
use crate::roadnet::{EdgeId, NetworkError, NetworkPosition, RoadNetwork};
use crate::trajectory::{GpsPoint, Trajectory};

pub use history::EdgeHistory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// Resample after every measurement update.
    #[default]
    EveryStep,
    /// Resample only when the effective sample size drops below half the population.
    Adaptive,
}

/// Filter configuration. Defaults are tuned for consumer GPS with roughly
/// 5 m error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub particle_count: usize,
    /// Std-dev of the initial position draw, meters per axis.
    pub init_pos_sigma: f64,
    /// Std-dev of the initial bearing draw, degrees.
    pub init_bearing_sigma: f64,
    /// The first fix must have an edge within this many meters.
    pub init_radius: f64,
    /// Largest accepted difference between a drawn bearing and the edge heading, degrees.
    pub bearing_gate: f64,
    /// A drawn position is on the network when an edge lies within this many meters.
    pub snap_tolerance: f64,
    /// Floor of the travel-distance std-dev, meters.
    pub transition_sigma: f64,
    /// Travel-distance std-dev as a fraction of the control distance.
    pub transition_sigma_scale: f64,
    /// Std-dev of the measurement likelihood, meters.
    pub measurement_sigma: f64,
    pub allow_uturn: bool,
    pub resampling: Resampling,
    pub seed: u64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            particle_count: 1_000,
            init_pos_sigma: 10.0,
            init_bearing_sigma: 20.0,
            init_radius: 50.0,
            bearing_gate: 90.0,
            snap_tolerance: 2.0,
            transition_sigma: 2.0,
            transition_sigma_scale: 0.2,
            measurement_sigma: 5.0,
            allow_uturn: false,
            resampling: Resampling::EveryStep,
            seed: 0,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), FilterError> {
        let positive = [
            ("init_pos_sigma", self.init_pos_sigma),
            ("init_bearing_sigma", self.init_bearing_sigma),
            ("init_radius", self.init_radius),
            ("snap_tolerance", self.snap_tolerance),
            ("transition_sigma", self.transition_sigma),
            ("measurement_sigma", self.measurement_sigma),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(FilterError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.transition_sigma_scale.is_finite() && self.transition_sigma_scale >= 0.0) {
            return Err(FilterError::InvalidParams(format!(
                "transition_sigma_scale must be non-negative, got {}",
                self.transition_sigma_scale
            )));
        }
        if self.particle_count == 0 {
            return Err(FilterError::InvalidParams("particle_count must be at least 1".into()));
        }
        if !(self.bearing_gate > 0.0 && self.bearing_gate <= 180.0) {
            return Err(FilterError::InvalidParams(format!(
                "bearing_gate must lie in (0, 180], got {}",
                self.bearing_gate
            )));
        }
        Ok(())
    }

    /// Travel-distance std-dev for a control of `u` meters.
    pub fn transition_sigma_for(&self, u: f64) -> f64 {
        self.transition_sigma.max(self.transition_sigma_scale * u)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
    #[error("no edge within {radius} m of the first GPS point")]
    UnmatchableStart { radius: f64 },
    #[error(
        "initialization failed: {accepted} of {proposals} proposals accepted \
         (snap tolerance {snap_tolerance} m, bearing gate {bearing_gate} deg)"
    )]
    InitializationFailure {
        proposals: usize,
        accepted: usize,
        snap_tolerance: f64,
        bearing_gate: f64,
    },
    #[error("all particle likelihoods vanished at step {step}")]
    Degenerate { step: usize },
    #[error("cannot resample: all weights are zero")]
    ZeroWeights,
    #[error("recovery at step {step} failed: {source}")]
    RecoveryFailed {
        step: usize,
        #[source]
        source: Box<FilterError>,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// A hypothesis of the vehicle state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Particle {
    pub state: NetworkPosition,
    pub history: EdgeHistory,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    /// Index of the last observation incorporated.
    pub step: usize,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn effective_sample_size(&self) -> f64 {
        let sum = self.weight_sum();
        let sq: f64 = self.particles.iter().map(|p| (p.weight / sum).powi(2)).sum();
        1.0 / sq
    }
}

/// A connected edge sequence and the share of particles that followed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePath {
    pub edges: Vec<EdgeId>,
    pub probability: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    /// Observation index.
    pub step: usize,
    /// Control distance fed to the transition, meters.
    pub control: f64,
    /// Effective sample size after the measurement update; 0 on degeneracy.
    pub ess: f64,
    pub resampled: bool,
    pub recovered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Sorted by probability, descending.
    pub candidates: Vec<CandidatePath>,
    pub steps: Vec<StepSummary>,
    pub recovery_events: usize,
    /// Observation index where the surviving histories begin. Non-zero only
    /// when a recovery restarted the filter; candidates then cover the suffix.
    pub segment_start: usize,
    pub params: FilterParams,
}

impl MatchResult {
    pub fn is_segmented(&self) -> bool {
        self.recovery_events > 0
    }

    pub fn best(&self) -> Option<&CandidatePath> {
        self.candidates.first()
    }
}

/// Filter stage reported to a [`run_filter_observed`] callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Initialized,
    Propagated,
    Weighed,
    Resampled,
    Reinitialized,
}

// Stream phases.
const PHASE_INIT: u64 = 1;
const PHASE_PROPAGATE: u64 = 2;
const PHASE_RESAMPLE: u64 = 3;
const PHASE_REINIT: u64 = 4;

/// Draws the initial particle population around `first`.
///
/// Position offsets and bearings are Gaussian. A draw is kept when an edge
/// lies within `snap_tolerance` of it and that edge's local heading is within
/// `bearing_gate` of the drawn bearing; the particle is placed at the
/// projection onto the closest such edge.
pub fn initialize<R: Rng + ?Sized>(
    net: &RoadNetwork,
    first: &GpsPoint,
    params: &FilterParams,
    rng: &mut R,
) -> Result<ParticleSet, FilterError> {
    params.validate()?;
    let centre = net.projection().project(first.position)?;
    if net.edges_within_radius_planar(centre, params.init_radius).is_empty() {
        return Err(FilterError::UnmatchableStart {
            radius: params.init_radius,
        });
    }

    let m = params.particle_count;
    let pos_noise = Normal::new(0.0, params.init_pos_sigma).expect("validated sigma");
    let bearing_noise = Normal::new(first.bearing, params.init_bearing_sigma).expect("validated sigma");
    let max_proposals = m.saturating_mul(1000);
    let weight = 1.0 / m as f64;

    let mut particles = Vec::with_capacity(m);
    let mut proposals = 0usize;
    while particles.len() < m {
        if proposals >= max_proposals {
            return Err(FilterError::InitializationFailure {
                proposals,
                accepted: particles.len(),
                snap_tolerance: params.snap_tolerance,
                bearing_gate: params.bearing_gate,
            });
        }
        proposals += 1;
        let q = PlanarPoint::new(centre.x + pos_noise.sample(rng), centre.y + pos_noise.sample(rng));
        let bearing = bearing_noise.sample(rng);

        // (dist, edge index, segment, t)
        let mut best: Option<(f64, usize, usize, f64)> = None;
        net.visit_segments_within(q, params.snap_tolerance, |e, k, proj| {
            let heading = net.edge_at(e).segment_heading(k);
            if angle_difference(bearing, heading) > params.bearing_gate {
                return;
            }
            let better = match best {
                None => true,
                Some((d, be, bk, _)) => (proj.dist, e, k) < (d, be, bk),
            };
            if better {
                best = Some((proj.dist, e, k, proj.t));
            }
        });
        if let Some((_, e, k, t)) = best {
            let edge = net.edge_at(e);
            particles.push(Particle {
                state: NetworkPosition {
                    edge: edge.id(),
                    offset: edge.offset_on_segment(k, t),
                },
                history: EdgeHistory::start(edge.id()),
                weight,
            });
        }
    }
    Ok(ParticleSet { particles, step: 0 })
}

/// Planar distance between two fixes: the control of the transition model.
pub fn control_distance(prev: &GpsPoint, curr: &GpsPoint, proj: &LocalProjection) -> Result<f64, GeoError> {
    Ok(planar_distance(
        proj.project(prev.position)?,
        proj.project(curr.position)?,
    ))
}

/// Moves every particle by `max(0, N(u, sigma))` meters along the network.
/// Each particle draws from its own stream keyed by one value taken from `rng`.
pub fn propagate<R: Rng + ?Sized>(
    net: &RoadNetwork,
    set: &mut ParticleSet,
    u: f64,
    params: &FilterParams,
    rng: &mut R,
) -> Result<(), FilterError> {
    if !(u.is_finite() && u >= 0.0) {
        return Err(NetworkError::InvalidDistance(u).into());
    }
    let sigma = params.transition_sigma_for(u);
    let base: u64 = rng.random();
    set.particles
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(i, p)| -> Result<(), FilterError> {
            let mut prng = particle_stream(base, i);
            let z: f64 = StandardNormal.sample(&mut prng);
            let dist = (u + sigma * z).max(0.0);
            let start = net.edge_idx(p.state.edge)?;
            let mut exited: Vec<usize> = Vec::new();
            let (end, offset, _) = net.advance_idx(start, p.state.offset, dist, params.allow_uturn, &mut prng, |e| {
                exited.push(e)
            });
            // Every exit after the first leaves an edge that was entered on
            // this step; the final edge is entered last.
            if !exited.is_empty() {
                let mut history = p.history.clone();
                for &e in &exited[1..] {
                    history = history.push(net.edge_at(e).id());
                }
                p.history = history.push(net.edge_at(end).id());
            }
            p.state = NetworkPosition {
                edge: net.edge_at(end).id(),
                offset,
            };
            Ok(())
        })
}

fn particle_stream(base: u64, index: usize) -> StreamRng {
    rng::stream(&[base, index as u64])
}

/// Multiplies each weight by the Gaussian likelihood of `obs` and normalises.
/// Returns the effective sample size, or [`FilterError::Degenerate`] when every
/// likelihood underflows to zero.
pub fn weigh(
    set: &mut ParticleSet,
    obs: &GpsPoint,
    params: &FilterParams,
    net: &RoadNetwork,
) -> Result<f64, FilterError> {
    let q = net.projection().project(obs.position)?;
    let inv = 1.0 / (2.0 * params.measurement_sigma * params.measurement_sigma);
    set.particles
        .par_iter_mut()
        .try_for_each(|p| -> Result<(), FilterError> {
            let at = net.edge(p.state.edge)?.planar_at(p.state.offset);
            let d = planar_distance(at, q);
            p.weight *= (-d * d * inv).exp();
            Ok(())
        })?;
    // Sequential sum keeps the result independent of thread count.
    let sum: f64 = set.particles.iter().map(|p| p.weight).sum();
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(FilterError::Degenerate { step: set.step });
    }
    let mut sq = 0.0;
    for p in &mut set.particles {
        p.weight /= sum;
        sq += p.weight * p.weight;
    }
    Ok(1.0 / sq)
}

/// Draws `particle_count` particles with replacement, proportionally to weight,
/// and resets all weights to `1 / particle_count`.
pub fn resample<R: Rng + ?Sized>(set: &mut ParticleSet, params: &FilterParams, rng: &mut R) -> Result<(), FilterError> {
    let index = WeightedIndex::new(set.particles.iter().map(|p| p.weight)).map_err(|_| FilterError::ZeroWeights)?;
    let m = params.particle_count;
    let weight = 1.0 / m as f64;
    let drawn: Vec<Particle> = (0..m)
        .map(|_| {
            let src = &set.particles[index.sample(rng)];
            Particle {
                state: src.state,
                history: src.history.clone(),
                weight,
            }
        })
        .collect();
    set.particles = drawn;
    Ok(())
}

/// Groups particles by exact history. Probability is `support / m`; ties are
/// ordered by edge-id sequence.
pub fn extract_paths(set: &ParticleSet, m: usize) -> Vec<CandidatePath> {
    // Resampled copies share history nodes, so most grouping is by pointer.
    let mut by_node: HashMap<*const (), (&EdgeHistory, usize)> = HashMap::new();
    for p in &set.particles {
        by_node.entry(p.history.id()).or_insert((&p.history, 0)).1 += 1;
    }
    let mut by_path: HashMap<Vec<EdgeId>, usize> = HashMap::new();
    for (history, count) in by_node.into_values() {
        *by_path.entry(history.to_vec()).or_default() += count;
    }
    let mut out: Vec<CandidatePath> = by_path
        .into_iter()
        .map(|(edges, support)| CandidatePath {
            edges,
            probability: support as f64 / m as f64,
            support,
        })
        .collect();
    out.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.edges.cmp(&b.edges)));
    out
}

/// Map-matches `traj` onto `net`.
pub fn run_filter(net: &RoadNetwork, traj: &Trajectory, params: &FilterParams) -> Result<MatchResult, FilterError> {
    run_filter_observed(net, traj, params, |_, _| {})
}

/// [`run_filter`] with a callback invoked after every stage.
pub fn run_filter_observed(
    net: &RoadNetwork,
    traj: &Trajectory,
    params: &FilterParams,
    mut observe: impl FnMut(Stage, &ParticleSet),
) -> Result<MatchResult, FilterError> {
    params.validate()?;
    let seed = params.seed;
    let points = traj.points();
    let proj = net.projection();

    let mut set = initialize(net, &points[0], params, &mut rng::stream(&[seed, 0, PHASE_INIT]))?;
    observe(Stage::Initialized, &set);

    let mut steps = Vec::with_capacity(points.len() - 1);
    let mut recovery_events = 0;
    let mut segment_start = 0;
    for t in 1..points.len() {
        let step = t as u64;
        let u = control_distance(&points[t - 1], &points[t], proj)?;
        propagate(
            net,
            &mut set,
            u,
            params,
            &mut rng::stream(&[seed, step, PHASE_PROPAGATE]),
        )?;
        set.step = t;
        observe(Stage::Propagated, &set);

        let mut summary = StepSummary {
            step: t,
            control: u,
            ess: 0.0,
            resampled: false,
            recovered: false,
        };
        match weigh(&mut set, &points[t], params, net) {
            Ok(ess) => {
                summary.ess = ess;
                observe(Stage::Weighed, &set);
                let due = match params.resampling {
                    Resampling::EveryStep => true,
                    Resampling::Adaptive => ess < params.particle_count as f64 / 2.0,
                };
                if due {
                    resample(&mut set, params, &mut rng::stream(&[seed, step, PHASE_RESAMPLE]))?;
                    summary.resampled = true;
                    observe(Stage::Resampled, &set);
                }
            }
            Err(FilterError::Degenerate { .. }) => {
                set = initialize(net, &points[t], params, &mut rng::stream(&[seed, step, PHASE_REINIT])).map_err(
                    |e| FilterError::RecoveryFailed {
                        step: t,
                        source: Box::new(e),
                    },
                )?;
                set.step = t;
                summary.recovered = true;
                recovery_events += 1;
                segment_start = t;
                observe(Stage::Reinitialized, &set);
            }
            Err(e) => return Err(e),
        }
        steps.push(summary);
    }

    // Path probabilities are particle fractions, so the adaptive mode finishes
    // with an equally weighted population.
    let uniform = 1.0 / params.particle_count as f64;
    if set.particles.iter().any(|p| p.weight != uniform) {
        let step = points.len() as u64;
        resample(&mut set, params, &mut rng::stream(&[seed, step, PHASE_RESAMPLE]))?;
        observe(Stage::Resampled, &set);
    }

    Ok(MatchResult {
        candidates: extract_paths(&set, params.particle_count),
        steps,
        recovery_events,
        segment_start,
        params: params.clone(),
    })
}

#[cfg(test)]
mod tests;
