//! Deterministic snap-and-stitch matcher used as a reference in sweeps.
//!
//! Each fix is snapped to the nearest edge (ties between overlapping edges go
//! to the one whose heading best matches the fix bearing) and consecutive
//! snaps are joined by shortest paths by length. There is no temporal or
//! speed term.

use std::collections::HashMap;

use petgraph::algo::astar;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

use crate::filter::CandidatePath;
use crate::geo::{angle_difference, planar_distance, GeoError, PlanarPoint};
use crate::roadnet::{EdgeId, NetworkError, RoadNetwork};
use crate::trajectory::Trajectory;

/// Fixes farther than this from every edge are rejected.
pub const BASELINE_SNAP_RADIUS: f64 = 100.0;

// Distances closer than this count as ties when snapping.
const TIE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("point {index} has no edge within {radius} m")]
    Unsnappable { index: usize, radius: f64 },
    #[error("no route from {from} to {to} (between points {} and {index})", .index - 1)]
    Disconnected { index: usize, from: EdgeId, to: EdgeId },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

struct Router<'a> {
    net: &'a RoadNetwork,
    graph: DiGraph<PlanarPoint, (f64, usize)>,
    node_of: HashMap<crate::roadnet::NodeId, NodeIndex>,
}

impl<'a> Router<'a> {
    fn new(net: &'a RoadNetwork) -> Self {
        let proj = net.projection();
        let mut graph = DiGraph::with_capacity(net.nodes().len(), net.edges().len());
        let mut node_of = HashMap::with_capacity(net.nodes().len());
        for n in net.nodes() {
            node_of.insert(n.id, graph.add_node(proj.project_unchecked(n.location)));
        }
        for (i, e) in net.edges().iter().enumerate() {
            graph.add_edge(node_of[&e.from()], node_of[&e.to()], (e.length(), i));
        }
        Router { net, graph, node_of }
    }

    /// Shortest edge-index sequence leading from the end of `from` to the
    /// start of `to`, excluding both.
    fn between(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let edges = self.net.edges();
        let start = self.node_of[&edges[from].to()];
        let goal = self.node_of[&edges[to].from()];
        let target = self.graph[goal];
        let (_, nodes) = astar(
            &self.graph,
            start,
            |n| n == goal,
            |e| e.weight().0,
            |n| planar_distance(self.graph[n], target),
        )?;
        let mut out = Vec::with_capacity(nodes.len().saturating_sub(1));
        for w in nodes.windows(2) {
            let best = self
                .graph
                .edges_connecting(w[0], w[1])
                .map(|e| *e.weight())
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .expect("astar follows existing edges");
            out.push(best.1);
        }
        Some(out)
    }
}

/// Matches `traj` by snapping and shortest-path stitching. The result has
/// probability 1 and support 1.
pub fn baseline_match(net: &RoadNetwork, traj: &Trajectory) -> Result<CandidatePath, BaselineError> {
    let proj = net.projection();
    let mut snaps: Vec<(usize, f64)> = Vec::with_capacity(traj.len());
    for (index, p) in traj.points().iter().enumerate() {
        let q = proj.project(p.position)?;
        let near = net.edges_within_radius_planar(q, BASELINE_SNAP_RADIUS);
        let Some(first) = near.first() else {
            return Err(BaselineError::Unsnappable {
                index,
                radius: BASELINE_SNAP_RADIUS,
            });
        };
        let best = near
            .iter()
            .take_while(|m| m.dist <= first.dist + TIE_EPS)
            .min_by(|a, b| {
                let ha = angle_difference(p.bearing, net.edge_at(a.edge_index).heading_at(a.position.offset));
                let hb = angle_difference(p.bearing, net.edge_at(b.edge_index).heading_at(b.position.offset));
                ha.total_cmp(&hb)
            })
            .expect("at least one candidate");
        snaps.push((best.edge_index, best.position.offset));
    }

    let router = Router::new(net);
    let mut path = vec![snaps[0].0];
    let mut current = snaps[0];
    for (index, &(edge, offset)) in snaps.iter().enumerate().skip(1) {
        if edge == current.0 {
            // Same edge: moving forward, or jitter backwards treated as standing still.
            current.1 = current.1.max(offset);
            continue;
        }
        let link = router
            .between(current.0, edge)
            .ok_or_else(|| BaselineError::Disconnected {
                index,
                from: net.edge_at(current.0).id(),
                to: net.edge_at(edge).id(),
            })?;
        path.extend(link);
        path.push(edge);
        current = (edge, offset);
    }

    Ok(CandidatePath {
        edges: path.into_iter().map(|i| net.edge_at(i).id()).collect(),
        probability: 1.0,
        support: 1,
    })
}
