//! Synthetic ground truth: a vehicle driving at constant speed on the network,
//! observed through noisy GPS fixes.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{normalize_degrees, GeoError, PlanarPoint};
use crate::rng;
use crate::roadnet::{EdgeId, NetworkError, NetworkPosition, RoadNetwork};
use crate::trajectory::{GpsPoint, Trajectory, TrajectoryError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Meters per second.
    pub speed: f64,
    /// Seconds.
    pub duration: f64,
    /// Seconds between fixes.
    pub sample_interval: f64,
    /// Per-axis position noise std-dev, meters.
    pub noise_sigma: f64,
    /// Bearing noise std-dev, degrees.
    pub bearing_noise_sigma: f64,
    pub allow_uturn: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            speed: 10.0,
            duration: 200.0,
            sample_interval: 1.0,
            noise_sigma: 5.0,
            bearing_noise_sigma: 10.0,
            allow_uturn: false,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return bad(format!("speed must be positive, got {}", self.speed));
        }
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0) {
            return bad(format!(
                "sample_interval must be positive, got {}",
                self.sample_interval
            ));
        }
        if !(self.duration.is_finite() && self.duration >= 2.0 * self.sample_interval) {
            return bad(format!(
                "duration must be at least twice the sample interval, got {}",
                self.duration
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if !(self.bearing_noise_sigma.is_finite() && self.bearing_noise_sigma >= 0.0) {
            return bad(format!(
                "bearing_noise_sigma must be non-negative, got {}",
                self.bearing_noise_sigma
            ));
        }
        Ok(())
    }

    /// Number of fixes in an untruncated run.
    pub fn sample_count(&self) -> usize {
        (self.duration / self.sample_interval + 1e-9).floor() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("network has no edges")]
    EmptyNetwork,
    #[error("vehicle reached a dead end before the second fix")]
    Trapped,
    #[error("empty truth path")]
    EmptyTruth,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Edges driven, in order.
    pub path: Vec<EdgeId>,
    /// True position at each emitted fix.
    pub positions: Vec<NetworkPosition>,
    /// The vehicle hit a dead end and fewer fixes than configured were emitted.
    pub truncated: bool,
}

/// Simulates one drive. The start is uniform over total network length.
/// Every `sample_interval` seconds the vehicle advances `speed * interval`
/// meters with the network's branching rule and emits a fix.
pub fn simulate<R: Rng + ?Sized>(
    net: &RoadNetwork,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(Trajectory, GroundTruth), SimError> {
    cfg.validate()?;
    if net.edges().is_empty() {
        return Err(SimError::EmptyNetwork);
    }
    let lengths = WeightedIndex::new(net.edges().iter().map(|e| e.length())).map_err(|_| SimError::EmptyNetwork)?;
    let edge = &net.edges()[lengths.sample(rng)];
    let mut pos = NetworkPosition {
        edge: edge.id(),
        offset: rng.random_range(0.0..edge.length()),
    };

    let pos_noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    let bearing_noise = Normal::new(0.0, cfg.bearing_noise_sigma).expect("validated sigma");
    let proj = net.projection();
    let step = cfg.speed * cfg.sample_interval;
    let n = cfg.sample_count();

    let mut path = vec![pos.edge];
    let mut positions = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let mut truncated = false;
    for k in 0..n {
        if k > 0 {
            let moved = net.advance(pos, step, cfg.allow_uturn, rng)?;
            if moved.dead_end {
                truncated = true;
                break;
            }
            path.extend(moved.entered());
            pos = moved.end;
        }
        let edge = net.edge(pos.edge)?;
        let truth = edge.planar_at(pos.offset);
        let observed = PlanarPoint::new(truth.x + pos_noise.sample(rng), truth.y + pos_noise.sample(rng));
        points.push(GpsPoint {
            position: proj.unproject(observed)?,
            bearing: normalize_degrees(edge.heading_at(pos.offset) + bearing_noise.sample(rng)),
            timestamp: k as f64 * cfg.sample_interval,
        });
        positions.push(pos);
    }
    if points.len() < 2 {
        return Err(SimError::Trapped);
    }
    Ok((
        Trajectory::new(points)?,
        GroundTruth {
            path,
            positions,
            truncated,
        },
    ))
}

/// [`simulate`] with randomness keyed by `cfg.seed`.
pub fn simulate_seeded(net: &RoadNetwork, cfg: &SimConfig) -> Result<(Trajectory, GroundTruth), SimError> {
    simulate(net, cfg, &mut rng::stream(&[cfg.seed]))
}

/// Length of the multiset intersection of `predicted` and `truth`, as a
/// fraction of the length of `truth`.
pub fn path_overlap(predicted: &[EdgeId], truth: &[EdgeId], net: &RoadNetwork) -> Result<f64, SimError> {
    if truth.is_empty() {
        return Err(SimError::EmptyTruth);
    }
    let mut available: HashMap<EdgeId, usize> = HashMap::new();
    for &e in predicted {
        net.edge(e)?;
        *available.entry(e).or_default() += 1;
    }
    let mut shared = 0.0;
    let mut total = 0.0;
    for &e in truth {
        let len = net.edge(e)?.length();
        total += len;
        if let Some(c) = available.get_mut(&e) {
            if *c > 0 {
                *c -= 1;
                shared += len;
            }
        }
    }
    Ok(shared / total)
}
