//! Network GeoJSON: a FeatureCollection of LineString features, each with an
//! integer `id` and a boolean `oneway` property.
//!
//! A feature with id `n` becomes edge `2n` in digitised direction; a two-way
//! feature also yields the reverse edge `2n + 1`. Nodes are synthesised from
//! LineString endpoints, merging endpoints closer than 0.5 m.

use std::collections::HashMap;

use serde_json::{json, Value};

use super::{build_network, EdgeId, EdgeSpec, NetworkError, Node, NodeId, RoadNetwork, ENDPOINT_TOLERANCE_M};
use crate::geo::{planar_distance, GeoPoint, PlanarPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct RoadFeature {
    pub id: u64,
    pub oneway: bool,
    pub coords: Vec<GeoPoint>,
}

impl RoadFeature {
    pub fn forward_edge(&self) -> EdgeId {
        EdgeId(2 * self.id)
    }

    pub fn reverse_edge(&self) -> Option<EdgeId> {
        (!self.oneway).then_some(EdgeId(2 * self.id + 1))
    }
}

pub fn parse_network_geojson(text: &str, grid_cell: f64) -> Result<RoadNetwork, NetworkError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| NetworkError::GeoJson(e.to_string()))?;
    let features = parse_features(&doc)?;
    network_from_features(&features, grid_cell)
}

fn parse_features(doc: &Value) -> Result<Vec<RoadFeature>, NetworkError> {
    let bad = |msg: String| NetworkError::GeoJson(msg);
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("top-level object must be a FeatureCollection".into()));
    }
    let list = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing `features` array".into()))?;

    list.iter()
        .enumerate()
        .map(|(i, f)| {
            let geometry = f
                .get("geometry")
                .ok_or_else(|| bad(format!("feature {i}: missing geometry")))?;
            let kind = geometry.get("type").and_then(Value::as_str);
            if kind != Some("LineString") {
                return Err(bad(format!("feature {i}: geometry type {kind:?} is not LineString")));
            }
            let props = f
                .get("properties")
                .ok_or_else(|| bad(format!("feature {i}: missing properties")))?;
            let id = props
                .get("id")
                .and_then(Value::as_u64)
                .filter(|&id| id <= (u64::MAX - 1) / 2)
                .ok_or_else(|| bad(format!("feature {i}: `id` must be a non-negative integer")))?;
            let oneway = props
                .get("oneway")
                .and_then(Value::as_bool)
                .ok_or_else(|| bad(format!("feature {i}: `oneway` must be a boolean")))?;
            let coords = geometry
                .get("coordinates")
                .and_then(Value::as_array)
                .ok_or_else(|| bad(format!("feature {i}: missing coordinates")))?
                .iter()
                .map(|c| {
                    let pair = c.as_array().filter(|a| a.len() >= 2);
                    let lon = pair.and_then(|a| a[0].as_f64());
                    let lat = pair.and_then(|a| a[1].as_f64());
                    match (lat, lon) {
                        (Some(lat), Some(lon)) => GeoPoint::new(lat, lon).map_err(|e| bad(format!("feature {i}: {e}"))),
                        _ => Err(bad(format!("feature {i}: malformed position"))),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(RoadFeature { id, oneway, coords })
        })
        .collect()
}

/// Expands road features into a directed network.
pub fn network_from_features(features: &[RoadFeature], grid_cell: f64) -> Result<RoadNetwork, NetworkError> {
    let all = features.iter().flat_map(|f| f.coords.iter().copied());
    let proj = super::bbox_projection(all)?;

    let mut nodes: Vec<Node> = Vec::new();
    let mut planar_nodes: Vec<PlanarPoint> = Vec::new();
    // 1 m buckets; a 3x3 neighbourhood covers the 0.5 m snap radius.
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut snap = |g: GeoPoint| -> NodeId {
        let p = proj.project_unchecked(g);
        let key = (p.x.floor() as i64, p.y.floor() as i64);
        let mut found: Option<usize> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = buckets.get(&(key.0 + dx, key.1 + dy)) {
                    for &n in list {
                        if planar_distance(planar_nodes[n], p) <= ENDPOINT_TOLERANCE_M && found.is_none_or(|f| n < f) {
                            found = Some(n);
                        }
                    }
                }
            }
        }
        let idx = found.unwrap_or_else(|| {
            let n = nodes.len();
            nodes.push(Node {
                id: NodeId(n as u64),
                location: g,
            });
            planar_nodes.push(p);
            buckets.entry(key).or_default().push(n);
            n
        });
        NodeId(idx as u64)
    };

    let mut edges = Vec::with_capacity(features.len() * 2);
    for f in features {
        if f.coords.len() < 2 {
            return Err(NetworkError::GeoJson(format!(
                "feature id {}: LineString needs at least two positions",
                f.id
            )));
        }
        let from = snap(f.coords[0]);
        let to = snap(f.coords[f.coords.len() - 1]);
        let fwd = f.forward_edge();
        let rev = f.reverse_edge();
        edges.push(EdgeSpec {
            id: fwd,
            from,
            to,
            geometry: f.coords.clone(),
            reverse_of: rev,
        });
        if let Some(rev) = rev {
            edges.push(EdgeSpec {
                id: rev,
                from: to,
                to: from,
                geometry: f.coords.iter().rev().copied().collect(),
                reverse_of: Some(fwd),
            });
        }
    }
    build_network(nodes, edges, grid_cell)
}

pub fn features_to_geojson(features: &[RoadFeature]) -> Value {
    let feats: Vec<Value> = features
        .iter()
        .map(|f| {
            json!({
                "type": "Feature",
                "properties": { "id": f.id, "oneway": f.oneway },
                "geometry": {
                    "type": "LineString",
                    "coordinates": f.coords.iter().map(|c| [c.lon, c.lat]).collect::<Vec<_>>(),
                }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": feats })
}
