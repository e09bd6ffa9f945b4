//! Small synthetic networks and trajectories used by tests, benches and the
//! bundled example data.
//!
//! Fixtures are laid out in meters around [`ANCHOR`] with a bounding box
//! centred on the origin, so the network's own projection coincides with the
//! layout frame and planar coordinates used here are the network's.

use crate::geo::{make_projection, planar_heading, GeoPoint, LocalProjection, PlanarPoint};
use crate::roadnet::{network_from_features, RoadFeature, RoadNetwork, DEFAULT_GRID_CELL};
use crate::trajectory::{GpsPoint, Trajectory};

/// Layout anchor (Camden, London).
pub const ANCHOR: GeoPoint = GeoPoint { lat: 51.54, lon: -0.14 };

pub fn anchor_projection() -> LocalProjection {
    make_projection(ANCHOR).expect("anchor is a valid coordinate")
}

pub fn feature(id: u64, oneway: bool, pts: &[(f64, f64)]) -> RoadFeature {
    let proj = anchor_projection();
    RoadFeature {
        id,
        oneway,
        coords: pts
            .iter()
            .map(|&(x, y)| proj.unproject_unchecked(PlanarPoint::new(x, y)))
            .collect(),
    }
}

pub fn build(features: &[RoadFeature]) -> RoadNetwork {
    network_from_features(features, DEFAULT_GRID_CELL).expect("fixture network is valid")
}

/// `n` x `n` intersections spaced `block` meters apart, every street two-way
/// and split at each intersection.
pub fn grid_features(n: usize, block: f64) -> Vec<RoadFeature> {
    let half = (n - 1) as f64 * block / 2.0;
    let at = |i: usize| i as f64 * block - half;
    let mut out = Vec::new();
    let mut id = 0;
    for j in 0..n {
        for i in 0..n - 1 {
            out.push(feature(id, false, &[(at(i), at(j)), (at(i + 1), at(j))]));
            id += 1;
        }
    }
    for i in 0..n {
        for j in 0..n - 1 {
            out.push(feature(id, false, &[(at(i), at(j)), (at(i), at(j + 1))]));
            id += 1;
        }
    }
    out
}

pub fn grid_network(n: usize, block: f64) -> RoadNetwork {
    build(&grid_features(n, block))
}

/// Two-way Y junction.
///
/// The stem runs north from (0, -300) to the fork at (0, -100). Each branch
/// jogs 10 m sideways and then runs north to y = 300, so the branches are the
/// parallel lines x = -10 (left, feature 1) and x = 10 (right, feature 2).
/// Stem feature 0. Edge ids: stem 0/1, left 2/3, right 4/5.
pub fn y_junction_features() -> Vec<RoadFeature> {
    vec![
        feature(0, false, &[(0.0, -300.0), (0.0, -100.0)]),
        feature(1, false, &[(0.0, -100.0), (-10.0, -100.0), (-10.0, 300.0)]),
        feature(2, false, &[(0.0, -100.0), (10.0, -100.0), (10.0, 300.0)]),
    ]
}

pub fn y_junction() -> RoadNetwork {
    build(&y_junction_features())
}

/// Four two-way arms of `arm` meters meeting at the origin.
pub fn cross_features(arm: f64) -> Vec<RoadFeature> {
    vec![
        feature(0, false, &[(0.0, 0.0), (arm, 0.0)]),
        feature(1, false, &[(0.0, 0.0), (0.0, arm)]),
        feature(2, false, &[(0.0, 0.0), (-arm, 0.0)]),
        feature(3, false, &[(0.0, 0.0), (0.0, -arm)]),
    ]
}

/// One one-way road running north from (0, -length/2) to (0, length/2).
pub fn straight_road(length: f64) -> RoadNetwork {
    build(&[feature(0, true, &[(0.0, -length / 2.0), (0.0, length / 2.0)])])
}

/// Two one-way roads `gap` meters apart: x = -gap/2 runs north (edge 0),
/// x = gap/2 runs south (edge 2).
pub fn parallel_opposing(gap: f64, length: f64) -> RoadNetwork {
    let (h, l) = (gap / 2.0, length / 2.0);
    build(&[
        feature(0, true, &[(-h, -l), (-h, l)]),
        feature(1, true, &[(h, l), (h, -l)]),
    ])
}

/// Trajectory from planar `(t, x, y)` samples in the anchor frame. Bearings
/// follow the direction of travel; the last point reuses the previous heading.
pub fn planar_trajectory(samples: &[(f64, f64, f64)]) -> Trajectory {
    let proj = anchor_projection();
    let mut points = Vec::with_capacity(samples.len());
    let mut heading = 0.0;
    for (i, &(t, x, y)) in samples.iter().enumerate() {
        if let Some(&(_, nx, ny)) = samples.get(i + 1) {
            heading = planar_heading(nx - x, ny - y).unwrap_or(heading);
        }
        points.push(GpsPoint {
            position: proj.unproject_unchecked(PlanarPoint::new(x, y)),
            bearing: heading,
            timestamp: t,
        });
    }
    Trajectory::new(points).expect("fixture trajectory is valid")
}

/// Random network with `n_features` roads drawn between `n_nodes` random
/// junctions in a `size` x `size` square. Roads have up to two interior
/// vertices and are two-way with probability one half.
pub fn random_features<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n_nodes: usize,
    n_features: usize,
    size: f64,
) -> Vec<RoadFeature> {
    let h = size / 2.0;
    let junctions: Vec<(f64, f64)> = (0..n_nodes)
        .map(|_| (rng.random_range(-h..h), rng.random_range(-h..h)))
        .collect();
    let mut out = Vec::with_capacity(n_features);
    while out.len() < n_features {
        let a = junctions[rng.random_range(0..n_nodes)];
        let b = junctions[rng.random_range(0..n_nodes)];
        if (a.0 - b.0).hypot(a.1 - b.1) < 1.0 {
            continue;
        }
        let mut pts = vec![a];
        for _ in 0..rng.random_range(0..3) {
            pts.push((rng.random_range(-h..h), rng.random_range(-h..h)));
        }
        pts.push(b);
        let oneway = rng.random_bool(0.5);
        out.push(feature(out.len() as u64, oneway, &pts));
    }
    out
}
