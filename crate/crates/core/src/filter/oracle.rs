//! Exact path posterior for small networks, by numerical integration.
//!
//! The filter's model is discretised on a fine grid and integrated without
//! sampling: edge offsets fall into bins of width [`OracleConfig::bin`],
//! travel distances are quadrature nodes at multiples of the bin width, and
//! every branch at a junction is enumerated with its probability. The
//! result is the posterior mass of every edge history, which a particle
//! filter with enough particles should reproduce.
//!
//! The initial distribution uses the Gaussian position density at each bin
//! times the probability that the initial bearing passes the gate for that
//! edge. Rejection at the snap tolerance and ties between overlapping edges
//! are not modelled; both matter only when several roads lie within a few
//! meters of the first fix.

use std::collections::HashMap;
use std::rc::Rc;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use super::{control_distance, CandidatePath, FilterParams};
use crate::geo::{normalize_degrees, planar_distance, GeoError, PlanarPoint};
use crate::roadnet::{EdgeId, NetworkError, RoadNetwork};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    /// Offset bin width and travel quadrature step, meters.
    pub bin: f64,
    pub max_edges: usize,
    pub max_observations: usize,
    pub max_paths: usize,
    /// States whose normalised mass falls below this are dropped.
    pub prune: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            bin: 0.25,
            max_edges: 8,
            max_observations: 5,
            max_paths: 10_000,
            prune: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("network has {edges} edges; the exact posterior supports at most {max}")]
    TooManyEdges { edges: usize, max: usize },
    #[error("trajectory has {points} points; the exact posterior supports at most {max}")]
    TooManyObservations { points: usize, max: usize },
    #[error("more than {max} distinct paths carry mass")]
    TooManyPaths { max: usize },
    #[error("posterior mass vanished at observation {step}")]
    NoMass { step: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Posterior mass of one edge history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathMass {
    pub edges: Vec<EdgeId>,
    pub probability: f64,
}

#[derive(Debug, Clone)]
struct Outcome {
    edge: usize,
    bin: usize,
    entered: Vec<usize>,
    prob: f64,
}

struct Model<'a> {
    net: &'a RoadNetwork,
    cfg: &'a OracleConfig,
    allow_uturn: bool,
    succ: Vec<Vec<usize>>,
    reverse: Vec<Option<usize>>,
    lengths: Vec<f64>,
    bins: Vec<usize>,
    memo: HashMap<(usize, usize), Rc<Vec<Outcome>>>,
}

impl<'a> Model<'a> {
    fn new(net: &'a RoadNetwork, cfg: &'a OracleConfig, allow_uturn: bool) -> Result<Self, OracleError> {
        let index: HashMap<EdgeId, usize> = net.edges().iter().enumerate().map(|(i, e)| (e.id(), i)).collect();
        let mut succ = Vec::new();
        let mut reverse = Vec::new();
        for e in net.edges() {
            succ.push(net.out_edges(e.to())?.iter().map(|id| index[id]).collect());
            reverse.push(e.reverse_of().map(|r| index[&r]));
        }
        let lengths: Vec<f64> = net.edges().iter().map(|e| e.length()).collect();
        let bins = lengths.iter().map(|l| ((l / cfg.bin).ceil() as usize).max(1)).collect();
        Ok(Model {
            net,
            cfg,
            allow_uturn,
            succ,
            reverse,
            lengths,
            bins,
            memo: HashMap::new(),
        })
    }

    fn bin_centre(&self, edge: usize, bin: usize) -> PlanarPoint {
        let offset = ((bin as f64 + 0.5) * self.cfg.bin).min(self.lengths[edge]);
        self.net.edges()[edge].planar_at(offset)
    }

    fn bin_of(&self, edge: usize, offset: f64) -> usize {
        ((offset / self.cfg.bin).floor() as usize).min(self.bins[edge] - 1)
    }

    /// Every way to end up `total` meters past the start of `edge`.
    fn outcomes(&mut self, edge: usize, total_bin: usize) -> Rc<Vec<Outcome>> {
        if let Some(o) = self.memo.get(&(edge, total_bin)) {
            return o.clone();
        }
        let mut out = Vec::new();
        let total = (total_bin as f64 + 0.5) * self.cfg.bin;
        self.walk(edge, total, 1.0, &mut Vec::new(), &mut out);
        let out = Rc::new(out);
        self.memo.insert((edge, total_bin), out.clone());
        out
    }

    fn walk(&self, edge: usize, dist: f64, prob: f64, entered: &mut Vec<usize>, out: &mut Vec<Outcome>) {
        let length = self.lengths[edge];
        if dist <= length {
            out.push(Outcome {
                edge,
                bin: self.bin_of(edge, dist),
                entered: entered.clone(),
                prob,
            });
            return;
        }
        let outs = &self.succ[edge];
        let excluded = match self.reverse[edge] {
            Some(r) if !self.allow_uturn && outs.len() > 1 && outs.contains(&r) => Some(r),
            _ => None,
        };
        let choices: Vec<usize> = outs.iter().copied().filter(|&o| Some(o) != excluded).collect();
        if choices.is_empty() {
            out.push(Outcome {
                edge,
                bin: self.bins[edge] - 1,
                entered: entered.clone(),
                prob,
            });
            return;
        }
        let p = prob / choices.len() as f64;
        for next in choices {
            entered.push(next);
            self.walk(next, dist - length, p, entered, out);
            entered.pop();
        }
    }
}

/// Probability that `wrap(b - heading) <= gate` for `b ~ N(mean, sigma)`.
fn gate_probability(mean: f64, sigma: f64, heading: f64, gate: f64) -> f64 {
    let n = Normal::new(0.0, sigma).expect("positive sigma");
    let delta = normalize_degrees(heading - mean);
    let delta = if delta > 180.0 { delta - 360.0 } else { delta };
    (-3..=3)
        .map(|k| {
            let c = delta + 360.0 * k as f64;
            n.cdf(c + gate) - n.cdf(c - gate)
        })
        .sum::<f64>()
        .min(1.0)
}

/// Quadrature masses of `max(0, N(u, sigma))` at nodes `k * h`.
fn travel_nodes(u: f64, sigma: f64, h: f64) -> Vec<(usize, f64)> {
    let n = Normal::new(u, sigma).expect("positive sigma");
    let lo = (((u - 9.0 * sigma) / h).floor()).max(0.0) as usize;
    let hi = ((u + 9.0 * sigma) / h).ceil() as usize;
    let mut out = Vec::new();
    for k in lo..=hi {
        let upper = n.cdf((k as f64 + 0.5) * h);
        let lower = if k == 0 { 0.0 } else { n.cdf((k as f64 - 0.5) * h) };
        let mass = upper - lower;
        if mass > 0.0 {
            out.push((k, mass));
        }
    }
    out
}

/// Offset-bin masses keyed by (history id, edge index).
type State = HashMap<(usize, usize), Vec<f64>>;

struct Interner {
    seqs: Vec<Vec<usize>>,
    ids: HashMap<Vec<usize>, usize>,
    max: usize,
}

impl Interner {
    fn new(max: usize) -> Self {
        Interner {
            seqs: Vec::new(),
            ids: HashMap::new(),
            max,
        }
    }

    fn intern(&mut self, seq: Vec<usize>) -> Result<usize, OracleError> {
        if let Some(&id) = self.ids.get(&seq) {
            return Ok(id);
        }
        if self.seqs.len() >= self.max {
            return Err(OracleError::TooManyPaths { max: self.max });
        }
        self.seqs.push(seq.clone());
        self.ids.insert(seq, self.seqs.len() - 1);
        Ok(self.seqs.len() - 1)
    }

    fn get(&self, id: usize) -> &[usize] {
        &self.seqs[id]
    }
}

/// Exact posterior over edge histories for `traj` under the filter model
/// configured by `params`. Returns paths sorted by probability, descending.
pub fn exact_posterior(
    net: &RoadNetwork,
    traj: &Trajectory,
    params: &FilterParams,
    cfg: &OracleConfig,
) -> Result<Vec<PathMass>, OracleError> {
    if net.edges().len() > cfg.max_edges {
        return Err(OracleError::TooManyEdges {
            edges: net.edges().len(),
            max: cfg.max_edges,
        });
    }
    if traj.len() > cfg.max_observations {
        return Err(OracleError::TooManyObservations {
            points: traj.len(),
            max: cfg.max_observations,
        });
    }
    let proj = net.projection();
    let points = traj.points();
    let mut model = Model::new(net, cfg, params.allow_uturn)?;

    let mut paths = Interner::new(cfg.max_paths);

    // Initial distribution.
    let c = proj.project(points[0].position)?;
    let inv_init = 1.0 / (2.0 * params.init_pos_sigma * params.init_pos_sigma);
    let mut state: State = HashMap::new();
    for (e, edge) in net.edges().iter().enumerate() {
        let h = paths.intern(vec![e])?;
        let mut masses = vec![0.0; model.bins[e]];
        let mut any = false;
        for (b, m) in masses.iter_mut().enumerate() {
            let offset = ((b as f64 + 0.5) * cfg.bin).min(model.lengths[e]);
            let p = edge.planar_at(offset);
            let d = planar_distance(p, c);
            let gate = gate_probability(
                points[0].bearing,
                params.init_bearing_sigma,
                edge.heading_at(offset),
                params.bearing_gate,
            );
            *m = (-d * d * inv_init).exp() * gate;
            any |= *m > 0.0;
        }
        if any {
            state.insert((h, e), masses);
        }
    }
    normalise_and_prune(&mut state, cfg.prune).ok_or(OracleError::NoMass { step: 0 })?;

    let inv_meas = 1.0 / (2.0 * params.measurement_sigma * params.measurement_sigma);
    for t in 1..points.len() {
        let u = control_distance(&points[t - 1], &points[t], proj)?;
        let nodes = travel_nodes(u, params.transition_sigma_for(u), cfg.bin);
        let mut next: State = HashMap::new();
        let mut keys: Vec<(usize, usize)> = state.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let (h, e) = key;
            let masses = &state[&key];
            for (b, &m) in masses.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                for &(k, w) in &nodes {
                    let outs = model.outcomes(e, b + k);
                    for o in outs.iter() {
                        let nh = if o.entered.is_empty() {
                            h
                        } else {
                            let mut seq = paths.get(h).to_vec();
                            seq.extend_from_slice(&o.entered);
                            paths.intern(seq)?
                        };
                        let slot = next
                            .entry((nh, o.edge))
                            .or_insert_with(|| vec![0.0; model.bins[o.edge]]);
                        slot[o.bin] += m * w * o.prob;
                    }
                }
            }
        }

        let q = proj.project(points[t].position)?;
        for ((_, e), masses) in next.iter_mut() {
            for (b, m) in masses.iter_mut().enumerate() {
                if *m > 0.0 {
                    let d = planar_distance(model.bin_centre(*e, b), q);
                    *m *= (-d * d * inv_meas).exp();
                }
            }
        }
        normalise_and_prune(&mut next, cfg.prune).ok_or(OracleError::NoMass { step: t })?;
        state = next;
    }

    let mut by_history: HashMap<usize, f64> = HashMap::new();
    for ((h, _), masses) in &state {
        *by_history.entry(*h).or_default() += masses.iter().sum::<f64>();
    }
    let mut out: Vec<PathMass> = by_history
        .into_iter()
        .map(|(h, probability)| PathMass {
            edges: paths.get(h).iter().map(|&i| net.edges()[i].id()).collect(),
            probability,
        })
        .collect();
    out.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.edges.cmp(&b.edges))
    });
    Ok(out)
}

fn normalise_and_prune(state: &mut State, prune: f64) -> Option<()> {
    let total: f64 = state.values().flat_map(|v| v.iter()).sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    for masses in state.values_mut() {
        for m in masses.iter_mut() {
            *m /= total;
            if *m < prune {
                *m = 0.0;
            }
        }
    }
    state.retain(|_, v| v.iter().any(|&m| m > 0.0));
    Some(())
}

/// L1 distance between filter candidates and an exact posterior, treating
/// paths missing from either side as zero mass.
pub fn l1_distance(candidates: &[CandidatePath], exact: &[PathMass]) -> f64 {
    let mut diff: HashMap<&[EdgeId], f64> = HashMap::new();
    for c in candidates {
        *diff.entry(c.edges.as_slice()).or_default() += c.probability;
    }
    for p in exact {
        *diff.entry(p.edges.as_slice()).or_default() -= p.probability;
    }
    diff.values().map(|d| d.abs()).sum()
}

/// Probability of `edges` in an exact posterior, zero when absent.
pub fn probability_of(exact: &[PathMass], edges: &[EdgeId]) -> f64 {
    exact.iter().find(|p| p.edges == edges).map_or(0.0, |p| p.probability)
}
