//! Directed road-network graph.
//!
//! Intersections are nodes and road segments are directed edges; a two-way
//! street is two edges linked through `reverse_of`. The network owns a single
//! [`LocalProjection`] centred on its bounding box, and every planar quantity
//! (edge lengths, offsets, query distances) lives in that frame.
//!
//! Besides lookup and geometry, the module implements the on-network
//! kinematics used by both the particle filter and the simulator:
//! [`RoadNetwork::advance`] moves a position a given distance along the
//! directed graph, drawing uniformly among the admissible out-edges at each
//! intersection it reaches.

mod geojson;
mod index;

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{
    self, make_projection, planar_distance, point_segment_projection, GeoError, GeoPoint, LocalProjection, PlanarPoint,
};
use index::SegmentGrid;

pub use geojson::{features_to_geojson, network_from_features, parse_network_geojson, RoadFeature};

/// Default spatial index cell size in meters.
pub const DEFAULT_GRID_CELL: f64 = 50.0;
/// Maximum distance between an edge's geometry endpoint and its node.
pub const ENDPOINT_TOLERANCE_M: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "edge {}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub location: GeoPoint,
}

/// Input description of a directed edge for [`build_network`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub geometry: Vec<GeoPoint>,
    pub reverse_of: Option<EdgeId>,
}

#[derive(Debug, Clone)]
pub struct Edge {
    id: EdgeId,
    from: NodeId,
    to: NodeId,
    geometry: Vec<GeoPoint>,
    planar: Vec<PlanarPoint>,
    // cumulative[i] is the distance from the start to geometry vertex i.
    cumulative: Vec<f64>,
    reverse_of: Option<EdgeId>,
    from_idx: usize,
    to_idx: usize,
    reverse_idx: Option<usize>,
}

impl Edge {
    pub fn id(&self) -> EdgeId {
        self.id
    }
    pub fn from(&self) -> NodeId {
        self.from
    }
    pub fn to(&self) -> NodeId {
        self.to
    }
    pub fn geometry(&self) -> &[GeoPoint] {
        &self.geometry
    }
    /// Geometry in the network's planar frame.
    pub fn planar(&self) -> &[PlanarPoint] {
        &self.planar
    }
    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("edge has at least two vertices")
    }
    pub fn reverse_of(&self) -> Option<EdgeId> {
        self.reverse_of
    }

    /// Segment index containing `offset`; the end of the edge maps to the last segment.
    fn segment_at(&self, offset: f64) -> usize {
        let last = self.planar.len() - 2;
        match self.cumulative[1..].iter().position(|&c| offset <= c) {
            Some(i) => i.min(last),
            None => last,
        }
    }

    pub fn planar_at(&self, offset: f64) -> PlanarPoint {
        let offset = offset.clamp(0.0, self.length());
        let s = self.segment_at(offset);
        let seg_len = self.cumulative[s + 1] - self.cumulative[s];
        let t = if seg_len > 0.0 {
            (offset - self.cumulative[s]) / seg_len
        } else {
            0.0
        };
        self.planar[s].lerp(self.planar[s + 1], t)
    }

    /// Heading of the segment containing `offset`, clockwise from north.
    pub fn heading_at(&self, offset: f64) -> f64 {
        let s = self.segment_at(offset.clamp(0.0, self.length()));
        self.segment_heading(s)
    }

    pub(crate) fn offset_on_segment(&self, segment: usize, t: f64) -> f64 {
        let seg_len = self.cumulative[segment + 1] - self.cumulative[segment];
        (self.cumulative[segment] + t * seg_len).min(self.length())
    }

    pub(crate) fn segment_heading(&self, s: usize) -> f64 {
        let (a, b) = (self.planar[s], self.planar[s + 1]);
        match geo::planar_heading(b.x - a.x, b.y - a.y) {
            Some(h) => h,
            // zero-length segment inside the polyline: fall back to the chord
            None => {
                let (a, b) = (self.planar[0], self.planar[self.planar.len() - 1]);
                geo::planar_heading(b.x - a.x, b.y - a.y).unwrap_or(0.0)
            }
        }
    }
}

/// A point on the network: an edge and the distance travelled along it from
/// its `from` node. The direction of travel is the edge's own direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkPosition {
    pub edge: EdgeId,
    pub offset: f64,
}

/// Result of [`RoadNetwork::advance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStep {
    pub end: NetworkPosition,
    /// Edges fully exited during the move, in order. The first one is the
    /// starting edge whenever the list is non-empty.
    pub traversed: Vec<EdgeId>,
    /// The move stopped at a node with no admissible out-edge while budget remained.
    pub dead_end: bool,
}

impl NetworkStep {
    /// Edges entered during the move, ending with `end.edge`.
    pub fn entered(&self) -> impl Iterator<Item = EdgeId> + '_ {
        let tail = (!self.traversed.is_empty()).then_some(self.end.edge);
        self.traversed.iter().skip(1).copied().chain(tail)
    }
}

/// A nearby edge returned by [`RoadNetwork::edges_within_radius`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMatch {
    pub edge: EdgeId,
    pub position: NetworkPosition,
    pub dist: f64,
    pub(crate) edge_index: usize,
    pub(crate) segment: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildIssue {
    #[error("duplicate {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate {0}")]
    DuplicateEdge(EdgeId),
    #[error("{edge} references missing {node}")]
    DanglingNode { edge: EdgeId, node: NodeId },
    #[error("{0} has fewer than two geometry points")]
    TooFewPoints(EdgeId),
    #[error("{0} has zero length")]
    ZeroLength(EdgeId),
    #[error("{edge}: geometry {end} is {distance:.2} m from its node")]
    EndpointMismatch {
        edge: EdgeId,
        end: &'static str,
        distance: f64,
    },
    #[error("{edge}: reverse_of {reverse} {reason}")]
    BadReverse {
        edge: EdgeId,
        reverse: EdgeId,
        reason: &'static str,
    },
    #[error("{what}: {source}")]
    Coordinate {
        what: String,
        #[source]
        source: GeoError,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("invalid network ({} issue(s)): {}", .0.len(), join_issues(.0))]
    Build(Vec<BuildIssue>),
    #[error("unknown {0}")]
    UnknownEdge(EdgeId),
    #[error("unknown {0}")]
    UnknownNode(NodeId),
    #[error("offset {offset} outside [0, {length}] on {edge}")]
    OffsetOutOfRange { edge: EdgeId, offset: f64, length: f64 },
    #[error("distance must be finite and non-negative, got {0}")]
    InvalidDistance(f64),
    #[error("empty edge sequence")]
    EmptyPath,
    #[error("edge sequence is disconnected between positions {} and {}", .index - 1, .index)]
    Disconnected { index: usize },
    #[error("network GeoJSON: {0}")]
    GeoJson(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

fn join_issues(issues: &[BuildIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    node_index: HashMap<NodeId, usize>,
    edges: Vec<Edge>,
    edge_index: HashMap<EdgeId, usize>,
    out_adjacency: Vec<Vec<EdgeId>>,
    out_indices: Vec<Vec<usize>>,
    projection: LocalProjection,
    grid: SegmentGrid,
}

/// Builds and validates a network. All validation problems are collected and
/// reported together.
pub fn build_network(nodes: Vec<Node>, edges: Vec<EdgeSpec>, grid_cell: f64) -> Result<RoadNetwork, NetworkError> {
    let mut issues = Vec::new();

    let mut node_index = HashMap::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        if let Err(e) = n.location.validate() {
            issues.push(BuildIssue::Coordinate {
                what: n.id.to_string(),
                source: e,
            });
        }
        if node_index.insert(n.id, i).is_some() {
            issues.push(BuildIssue::DuplicateNode(n.id));
        }
    }
    let mut edge_index = HashMap::with_capacity(edges.len());
    for (i, e) in edges.iter().enumerate() {
        if edge_index.insert(e.id, i).is_some() {
            issues.push(BuildIssue::DuplicateEdge(e.id));
        }
        for (k, g) in e.geometry.iter().enumerate() {
            if let Err(err) = g.validate() {
                issues.push(BuildIssue::Coordinate {
                    what: format!("{} vertex {k}", e.id),
                    source: err,
                });
            }
        }
    }
    if !issues.is_empty() {
        return Err(NetworkError::Build(issues));
    }

    let projection = bbox_projection(
        nodes
            .iter()
            .map(|n| n.location)
            .chain(edges.iter().flat_map(|e| e.geometry.iter().copied())),
    )?;

    let mut built = Vec::with_capacity(edges.len());
    for spec in &edges {
        let from_idx = node_index.get(&spec.from).copied();
        let to_idx = node_index.get(&spec.to).copied();
        for (node, idx) in [(spec.from, from_idx), (spec.to, to_idx)] {
            if idx.is_none() {
                issues.push(BuildIssue::DanglingNode { edge: spec.id, node });
            }
        }
        if spec.geometry.len() < 2 {
            issues.push(BuildIssue::TooFewPoints(spec.id));
            continue;
        }
        let planar: Vec<PlanarPoint> = spec.geometry.iter().map(|g| projection.project_unchecked(*g)).collect();
        let mut cumulative = Vec::with_capacity(planar.len());
        cumulative.push(0.0);
        let mut acc = 0.0;
        for w in planar.windows(2) {
            acc += planar_distance(w[0], w[1]);
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            issues.push(BuildIssue::ZeroLength(spec.id));
        }
        let (Some(from_idx), Some(to_idx)) = (from_idx, to_idx) else {
            continue;
        };
        for (end, node_idx, p) in [
            ("start", from_idx, planar[0]),
            ("end", to_idx, planar[planar.len() - 1]),
        ] {
            let node_p = projection.project_unchecked(nodes[node_idx].location);
            let distance = planar_distance(node_p, p);
            if distance > ENDPOINT_TOLERANCE_M {
                issues.push(BuildIssue::EndpointMismatch {
                    edge: spec.id,
                    end,
                    distance,
                });
            }
        }
        built.push(Edge {
            id: spec.id,
            from: spec.from,
            to: spec.to,
            geometry: spec.geometry.clone(),
            planar,
            cumulative,
            reverse_of: spec.reverse_of,
            from_idx,
            to_idx,
            reverse_idx: None,
        });
    }
    if !issues.is_empty() {
        return Err(NetworkError::Build(issues));
    }

    // Same order as the input, so edge_index still applies.
    for i in 0..built.len() {
        let Some(rev) = built[i].reverse_of else {
            continue;
        };
        let id = built[i].id;
        let Some(&j) = edge_index.get(&rev) else {
            issues.push(BuildIssue::BadReverse {
                edge: id,
                reverse: rev,
                reason: "does not exist",
            });
            continue;
        };
        let (a, b) = (&built[i], &built[j]);
        if i == j {
            issues.push(BuildIssue::BadReverse {
                edge: id,
                reverse: rev,
                reason: "points to itself",
            });
        } else if b.reverse_of != Some(id) {
            issues.push(BuildIssue::BadReverse {
                edge: id,
                reverse: rev,
                reason: "does not point back",
            });
        } else if a.from != b.to || a.to != b.from {
            issues.push(BuildIssue::BadReverse {
                edge: id,
                reverse: rev,
                reason: "does not have swapped endpoints",
            });
        } else if a.planar.len() != b.planar.len()
            || a.planar
                .iter()
                .zip(b.planar.iter().rev())
                .any(|(p, q)| planar_distance(*p, *q) > ENDPOINT_TOLERANCE_M)
        {
            issues.push(BuildIssue::BadReverse {
                edge: id,
                reverse: rev,
                reason: "does not have reversed geometry",
            });
        } else {
            built[i].reverse_idx = Some(j);
        }
    }
    if !issues.is_empty() {
        return Err(NetworkError::Build(issues));
    }

    let mut out_adjacency = vec![Vec::new(); nodes.len()];
    let mut out_indices = vec![Vec::new(); nodes.len()];
    for (i, e) in built.iter().enumerate() {
        out_adjacency[e.from_idx].push(e.id);
        out_indices[e.from_idx].push(i);
    }

    let polylines: Vec<&[PlanarPoint]> = built.iter().map(|e| e.planar.as_slice()).collect();
    let grid = SegmentGrid::build(grid_cell, &polylines);

    Ok(RoadNetwork {
        nodes,
        node_index,
        edges: built,
        edge_index,
        out_adjacency,
        out_indices,
        projection,
        grid,
    })
}

fn bbox_projection(points: impl Iterator<Item = GeoPoint>) -> Result<LocalProjection, GeoError> {
    let mut lat = (f64::INFINITY, f64::NEG_INFINITY);
    let mut lon = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        lat = (lat.0.min(p.lat), lat.1.max(p.lat));
        lon = (lon.0.min(p.lon), lon.1.max(p.lon));
    }
    if !lat.0.is_finite() {
        return make_projection(GeoPoint { lat: 0.0, lon: 0.0 });
    }
    make_projection(GeoPoint {
        lat: 0.5 * (lat.0 + lat.1),
        lon: 0.5 * (lon.0 + lon.1),
    })
}

impl RoadNetwork {
    pub fn projection(&self) -> &LocalProjection {
        &self.projection
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Edges in input order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn grid_cell(&self) -> f64 {
        self.grid.cell_size()
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, NetworkError> {
        self.node_index
            .get(&id)
            .map(|&i| &self.nodes[i])
            .ok_or(NetworkError::UnknownNode(id))
    }

    pub fn edge(&self, id: EdgeId) -> Result<&Edge, NetworkError> {
        self.edge_idx(id).map(|i| &self.edges[i])
    }

    pub(crate) fn edge_idx(&self, id: EdgeId) -> Result<usize, NetworkError> {
        self.edge_index.get(&id).copied().ok_or(NetworkError::UnknownEdge(id))
    }

    pub(crate) fn edge_at(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(Edge::length).sum()
    }

    /// Edges leaving `node`, in input order.
    pub fn out_edges(&self, node: NodeId) -> Result<&[EdgeId], NetworkError> {
        self.node_index
            .get(&node)
            .map(|&i| self.out_adjacency[i].as_slice())
            .ok_or(NetworkError::UnknownNode(node))
    }

    pub fn validate_position(&self, pos: NetworkPosition) -> Result<&Edge, NetworkError> {
        let edge = self.edge(pos.edge)?;
        if !(0.0..=edge.length()).contains(&pos.offset) {
            return Err(NetworkError::OffsetOutOfRange {
                edge: pos.edge,
                offset: pos.offset,
                length: edge.length(),
            });
        }
        Ok(edge)
    }

    pub fn position_to_point(&self, pos: NetworkPosition) -> Result<GeoPoint, NetworkError> {
        let p = self.position_to_planar(pos)?;
        Ok(self.projection.unproject_unchecked(p))
    }

    pub fn position_to_planar(&self, pos: NetworkPosition) -> Result<PlanarPoint, NetworkError> {
        let edge = self.validate_position(pos)?;
        Ok(edge.planar_at(pos.offset))
    }

    /// Calls `f(edge_index, segment_index, projection)` for every segment whose
    /// distance to `p` is at most `r`. A segment spanning several cells is
    /// reported once per visited cell.
    pub(crate) fn visit_segments_within(
        &self,
        p: PlanarPoint,
        r: f64,
        mut f: impl FnMut(usize, usize, geo::SegmentProjection),
    ) {
        self.grid.visit_near(p, r, |s| {
            let e = &self.edges[s.edge as usize];
            let k = s.segment as usize;
            let proj = point_segment_projection(p, e.planar[k], e.planar[k + 1]);
            if proj.dist <= r {
                f(s.edge as usize, k, proj);
            }
        });
    }

    /// Every edge within `r` meters of `p`, once each, with the closest
    /// position on it. Sorted by distance, ties in input order.
    pub fn edges_within_radius(&self, p: GeoPoint, r: f64) -> Result<Vec<EdgeMatch>, NetworkError> {
        let q = self.projection.project(p)?;
        Ok(self.edges_within_radius_planar(q, r))
    }

    pub fn edges_within_radius_planar(&self, p: PlanarPoint, r: f64) -> Vec<EdgeMatch> {
        let mut hits: Vec<(usize, usize, geo::SegmentProjection)> = Vec::new();
        self.visit_segments_within(p, r, |e, k, proj| hits.push((e, k, proj)));
        hits.sort_by(|a, b| a.0.cmp(&b.0).then(a.2.dist.total_cmp(&b.2.dist)).then(a.1.cmp(&b.1)));
        hits.dedup_by_key(|h| h.0);
        let mut out: Vec<EdgeMatch> = hits
            .into_iter()
            .map(|(ei, k, proj)| {
                let e = &self.edges[ei];
                let offset = e.offset_on_segment(k, proj.t);
                EdgeMatch {
                    edge: e.id,
                    position: NetworkPosition { edge: e.id, offset },
                    dist: proj.dist,
                    edge_index: ei,
                    segment: k,
                }
            })
            .collect();
        out.sort_by(|a, b| a.dist.total_cmp(&b.dist).then(a.edge_index.cmp(&b.edge_index)));
        out
    }

    /// Moves `dist` meters along the directed network from `pos`.
    ///
    /// At every node reached with budget left, the next edge is drawn uniformly
    /// from the node's out-edges. Unless `allow_uturn` is set, the reverse of the
    /// edge just exited is excluded while any other option exists. A node with
    /// no out-edges absorbs the remaining distance.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        pos: NetworkPosition,
        dist: f64,
        allow_uturn: bool,
        rng: &mut R,
    ) -> Result<NetworkStep, NetworkError> {
        if !(dist.is_finite() && dist >= 0.0) {
            return Err(NetworkError::InvalidDistance(dist));
        }
        self.validate_position(pos)?;
        let start = self.edge_idx(pos.edge)?;
        let mut traversed = Vec::new();
        let (end, offset, dead_end) = self.advance_idx(start, pos.offset, dist, allow_uturn, rng, |e| {
            traversed.push(self.edges[e].id)
        });
        Ok(NetworkStep {
            end: NetworkPosition {
                edge: self.edges[end].id,
                offset,
            },
            traversed,
            dead_end,
        })
    }

    /// Index-based core of [`advance`](Self::advance); `on_exit` sees every
    /// fully traversed edge. Returns `(edge, offset, dead_end)`.
    pub(crate) fn advance_idx<R: Rng + ?Sized>(
        &self,
        mut edge: usize,
        mut offset: f64,
        dist: f64,
        allow_uturn: bool,
        rng: &mut R,
        mut on_exit: impl FnMut(usize),
    ) -> (usize, f64, bool) {
        let mut remaining = dist;
        loop {
            let e = &self.edges[edge];
            let length = e.length();
            let room = length - offset;
            if remaining <= room {
                return (edge, offset + remaining, false);
            }
            remaining -= room;
            let outs = &self.out_indices[e.to_idx];
            let excluded = match e.reverse_idx {
                Some(r) if !allow_uturn && outs.len() > 1 && outs.contains(&r) => Some(r),
                _ => None,
            };
            let choices = outs.len() - usize::from(excluded.is_some());
            if choices == 0 {
                return (edge, length, true);
            }
            let pick = if choices == 1 { 0 } else { rng.random_range(0..choices) };
            let next = outs
                .iter()
                .copied()
                .filter(|&o| Some(o) != excluded)
                .nth(pick)
                .expect("pick is within the admissible choices");
            on_exit(edge);
            edge = next;
            offset = 0.0;
        }
    }

    /// Concatenated geometry of a connected edge sequence, without repeated
    /// junction vertices.
    pub fn path_geometry(&self, edges: &[EdgeId]) -> Result<Vec<GeoPoint>, NetworkError> {
        self.collect_path(edges, |e| e.geometry.as_slice())
    }

    /// Planar counterpart of [`path_geometry`](Self::path_geometry).
    pub fn path_polyline(&self, edges: &[EdgeId]) -> Result<Vec<PlanarPoint>, NetworkError> {
        self.collect_path(edges, |e| e.planar.as_slice())
    }

    fn collect_path<T: Copy>(&self, edges: &[EdgeId], pts: impl Fn(&Edge) -> &[T]) -> Result<Vec<T>, NetworkError> {
        let first = edges.first().ok_or(NetworkError::EmptyPath)?;
        let mut prev = self.edge(*first)?;
        let mut out = pts(prev).to_vec();
        for (i, id) in edges.iter().enumerate().skip(1) {
            let e = self.edge(*id)?;
            if prev.to != e.from {
                return Err(NetworkError::Disconnected { index: i });
            }
            out.extend_from_slice(&pts(e)[1..]);
            prev = e;
        }
        Ok(out)
    }

    /// Checks that consecutive edges share a node.
    pub fn is_connected_path(&self, edges: &[EdgeId]) -> bool {
        edges.windows(2).all(|w| match (self.edge(w[0]), self.edge(w[1])) {
            (Ok(a), Ok(b)) => a.to == b.from,
            _ => false,
        }) && edges.iter().all(|e| self.edge_index.contains_key(e))
    }
}

#[cfg(test)]
mod tests;
