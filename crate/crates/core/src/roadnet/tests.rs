use std::collections::HashMap;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixtures::{self, anchor_projection, feature};

fn gp(x: f64, y: f64) -> GeoPoint {
    anchor_projection().unproject_unchecked(PlanarPoint::new(x, y))
}

fn two_node_network(reverse: bool) -> Result<RoadNetwork, NetworkError> {
    let nodes = vec![
        Node {
            id: NodeId(1),
            location: gp(0.0, 0.0),
        },
        Node {
            id: NodeId(2),
            location: gp(100.0, 0.0),
        },
    ];
    let mut edges = vec![EdgeSpec {
        id: EdgeId(10),
        from: NodeId(1),
        to: NodeId(2),
        geometry: vec![gp(0.0, 0.0), gp(100.0, 0.0)],
        reverse_of: reverse.then_some(EdgeId(11)),
    }];
    if reverse {
        edges.push(EdgeSpec {
            id: EdgeId(11),
            from: NodeId(2),
            to: NodeId(1),
            geometry: vec![gp(100.0, 0.0), gp(0.0, 0.0)],
            reverse_of: Some(EdgeId(10)),
        });
    }
    build_network(nodes, edges, DEFAULT_GRID_CELL)
}

#[test]
fn build_single_edge() {
    let net = two_node_network(false).unwrap();
    assert_abs_diff_eq!(net.edge(EdgeId(10)).unwrap().length(), 100.0, epsilon = 0.1);
    assert_eq!(net.out_edges(NodeId(1)).unwrap(), &[EdgeId(10)]);
    assert!(net.out_edges(NodeId(2)).unwrap().is_empty());
}

#[test]
fn build_reverse_pair() {
    let net = two_node_network(true).unwrap();
    for (a, b) in [(10, 11), (11, 10)] {
        let e = net.edge(EdgeId(a)).unwrap();
        let r = net.edge(e.reverse_of().unwrap()).unwrap();
        assert_eq!(r.id(), EdgeId(b));
        assert_eq!(r.reverse_of(), Some(EdgeId(a)));
        assert_eq!((e.from(), e.to()), (r.to(), r.from()));
    }
}

#[test]
fn build_reports_dangling_node_by_edge() {
    let nodes = vec![Node {
        id: NodeId(1),
        location: gp(0.0, 0.0),
    }];
    let edges = vec![EdgeSpec {
        id: EdgeId(7),
        from: NodeId(1),
        to: NodeId(99),
        geometry: vec![gp(0.0, 0.0), gp(100.0, 0.0)],
        reverse_of: None,
    }];
    let err = build_network(nodes, edges, 50.0).unwrap_err();
    assert_eq!(
        err,
        NetworkError::Build(vec![BuildIssue::DanglingNode {
            edge: EdgeId(7),
            node: NodeId(99)
        }])
    );
    assert!(err.to_string().contains("edge 7"));
}

#[test]
fn build_aggregates_geometry_issues() {
    let nodes = vec![
        Node {
            id: NodeId(1),
            location: gp(0.0, 0.0),
        },
        Node {
            id: NodeId(2),
            location: gp(100.0, 0.0),
        },
    ];
    let edges = vec![
        EdgeSpec {
            id: EdgeId(1),
            from: NodeId(1),
            to: NodeId(2),
            geometry: vec![gp(0.0, 0.0), gp(90.0, 0.0)],
            reverse_of: None,
        },
        EdgeSpec {
            id: EdgeId(2),
            from: NodeId(1),
            to: NodeId(1),
            geometry: vec![gp(0.0, 0.0), gp(0.0, 0.0)],
            reverse_of: None,
        },
    ];
    let NetworkError::Build(issues) = build_network(nodes, edges, 50.0).unwrap_err() else {
        panic!("expected build error");
    };
    assert_eq!(issues.len(), 2);
    assert!(matches!(
        issues[0],
        BuildIssue::EndpointMismatch {
            edge: EdgeId(1),
            end: "end",
            ..
        }
    ));
    assert_eq!(issues[1], BuildIssue::ZeroLength(EdgeId(2)));
}

#[test]
fn build_rejects_broken_reverse_link() {
    let nodes = vec![
        Node {
            id: NodeId(1),
            location: gp(0.0, 0.0),
        },
        Node {
            id: NodeId(2),
            location: gp(100.0, 0.0),
        },
    ];
    let edges = vec![
        EdgeSpec {
            id: EdgeId(1),
            from: NodeId(1),
            to: NodeId(2),
            geometry: vec![gp(0.0, 0.0), gp(100.0, 0.0)],
            reverse_of: Some(EdgeId(2)),
        },
        EdgeSpec {
            id: EdgeId(2),
            from: NodeId(2),
            to: NodeId(1),
            geometry: vec![gp(100.0, 0.0), gp(0.0, 0.0)],
            reverse_of: None,
        },
    ];
    let err = build_network(nodes, edges, 50.0).unwrap_err();
    assert!(err.to_string().contains("does not point back"), "{err}");
}

/// Linear scan over every segment of every edge, independent of the grid.
fn brute_force(net: &RoadNetwork, p: PlanarPoint, r: f64) -> Vec<(EdgeId, f64, f64)> {
    let mut out = Vec::new();
    for e in net.edges() {
        let pts = e.planar();
        let mut best: Option<(f64, f64)> = None;
        let mut walked = 0.0;
        for w in pts.windows(2) {
            let len = planar_distance(w[0], w[1]);
            let s = point_segment_projection(p, w[0], w[1]);
            if best.is_none_or(|(d, _)| s.dist < d) {
                best = Some((s.dist, walked + s.t * len));
            }
            walked += len;
        }
        let (d, off) = best.unwrap();
        if d <= r {
            out.push((e.id(), d, off));
        }
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    out
}

fn assert_matches_brute_force(net: &RoadNetwork, p: PlanarPoint, r: f64) {
    let got = net.edges_within_radius_planar(p, r);
    let want = brute_force(net, p, r);
    let mut got_ids: Vec<EdgeId> = got.iter().map(|m| m.edge).collect();
    let mut want_ids: Vec<EdgeId> = want.iter().map(|w| w.0).collect();
    got_ids.sort();
    want_ids.sort();
    assert_eq!(got_ids, want_ids, "query {p:?} r {r}");
    let by_id: HashMap<EdgeId, (f64, f64)> = want.iter().map(|w| (w.0, (w.1, w.2))).collect();
    for m in &got {
        let (d, off) = by_id[&m.edge];
        assert_abs_diff_eq!(m.dist, d, epsilon = 1e-9);
        assert_abs_diff_eq!(m.position.offset, off, epsilon = 1e-6);
    }
    assert!(got.windows(2).all(|w| w[0].dist <= w[1].dist));
}

#[test]
fn radius_query_examples() {
    let net = fixtures::straight_road(200.0);
    let hits = net.edges_within_radius_planar(PlanarPoint::new(0.0, 20.0), 10.0);
    assert_eq!(hits.len(), 1);
    assert_abs_diff_eq!(hits[0].dist, 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(hits[0].position.offset, 120.0, epsilon = 1e-6);

    assert!(net
        .edges_within_radius_planar(PlanarPoint::new(50.0, 0.0), 10.0)
        .is_empty());

    let cross = fixtures::build(&fixtures::cross_features(100.0));
    let hits = cross.edges_within_radius(fixtures::ANCHOR, 5.0).unwrap();
    assert_eq!(hits.len(), 8);
    assert!(hits.iter().all(|h| h.dist < 1e-6));
    assert_matches_brute_force(&cross, PlanarPoint::new(0.0, 0.0), 5.0);
}

#[test]
fn radius_query_matches_brute_force_on_random_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5 {
        let feats = fixtures::random_features(&mut rng, 40, 100, 2000.0);
        let net = network_from_features(&feats, 50.0).unwrap();
        for _ in 0..200 {
            let p = PlanarPoint::new(rng.random_range(-1100.0..1100.0), rng.random_range(-1100.0..1100.0));
            let r = rng.random_range(1.0..150.0);
            assert_matches_brute_force(&net, p, r);
        }
    }
}

#[test]
fn position_to_point_interpolates() {
    let net = two_node_network(false).unwrap();
    let at = |offset| {
        net.position_to_planar(NetworkPosition {
            edge: EdgeId(10),
            offset,
        })
        .unwrap()
    };
    let proj = net.projection();
    let a = proj.project_unchecked(gp(0.0, 0.0));
    let b = proj.project_unchecked(gp(100.0, 0.0));
    assert_eq!(at(0.0), a);
    assert_abs_diff_eq!(at(net.edge(EdgeId(10)).unwrap().length()).x, b.x, epsilon = 1e-9);
    let mid = at(30.0);
    assert_abs_diff_eq!(mid.x, a.x + 0.3 * (b.x - a.x), epsilon = 1e-3);
    assert_abs_diff_eq!(mid.y, a.y, epsilon = 1e-9);

    let g = net
        .position_to_point(NetworkPosition {
            edge: EdgeId(10),
            offset: 0.0,
        })
        .unwrap();
    assert_abs_diff_eq!(g.lat, gp(0.0, 0.0).lat, epsilon = 1e-12);
    assert!(matches!(
        net.position_to_point(NetworkPosition {
            edge: EdgeId(3),
            offset: 0.0
        }),
        Err(NetworkError::UnknownEdge(EdgeId(3)))
    ));
    assert!(net
        .position_to_point(NetworkPosition {
            edge: EdgeId(10),
            offset: 150.0
        })
        .is_err());
}

#[test]
fn advance_simple_moves() {
    let net = fixtures::straight_road(100.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let start = NetworkPosition {
        edge: EdgeId(0),
        offset: 50.0,
    };
    let step = net.advance(start, 0.0, false, &mut rng).unwrap();
    assert_eq!(step.end, start);
    assert!(step.traversed.is_empty());

    let step = net.advance(start, 30.0, false, &mut rng).unwrap();
    assert_abs_diff_eq!(step.end.offset, 80.0, epsilon = 1e-9);
    assert!(step.traversed.is_empty() && !step.dead_end);

    let step = net.advance(start, 500.0, false, &mut rng).unwrap();
    assert!(step.dead_end);
    assert_eq!(step.end.offset, net.edge(EdgeId(0)).unwrap().length());

    assert!(net.advance(start, -1.0, false, &mut rng).is_err());
}

#[test]
fn advance_branch_frequencies_are_uniform() {
    // From the stem, the fork offers the two branches once the U-turn is excluded.
    let net = fixtures::y_junction();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = NetworkPosition {
        edge: EdgeId(0),
        offset: 150.0,
    };
    let n = 10_000;
    let mut left = 0;
    for _ in 0..n {
        let step = net.advance(start, 100.0, false, &mut rng).unwrap();
        assert_eq!(step.traversed, vec![EdgeId(0)]);
        match step.end.edge {
            EdgeId(2) => left += 1,
            EdgeId(4) => {}
            other => panic!("unexpected branch {other}"),
        }
    }
    let f = left as f64 / n as f64;
    assert!((0.48..=0.52).contains(&f), "left frequency {f}");
}

#[test]
fn uturn_policy() {
    let net = fixtures::y_junction();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let start = NetworkPosition {
        edge: EdgeId(0),
        offset: 150.0,
    };
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..200 {
        seen.insert(net.advance(start, 100.0, true, &mut rng).unwrap().end.edge);
    }
    assert_eq!(
        seen.into_iter().collect::<Vec<_>>(),
        vec![EdgeId(1), EdgeId(2), EdgeId(4)]
    );

    // Dead end of a two-way branch: the reverse is the only way out.
    let len = net.edge(EdgeId(2)).unwrap().length();
    let at_tip = NetworkPosition {
        edge: EdgeId(2),
        offset: len - 5.0,
    };
    let step = net.advance(at_tip, 15.0, false, &mut rng).unwrap();
    assert_eq!(step.end.edge, EdgeId(3));
    assert_abs_diff_eq!(step.end.offset, 10.0, epsilon = 1e-9);
    assert!(!step.dead_end);
}

#[test]
fn out_edges_examples() {
    let net = two_node_network(false).unwrap();
    assert!(net.out_edges(NodeId(2)).unwrap().is_empty());
    assert!(matches!(net.out_edges(NodeId(42)), Err(NetworkError::UnknownNode(_))));

    let cross = fixtures::build(&fixtures::cross_features(100.0));
    let centre = cross.edge(EdgeId(0)).unwrap().from();
    assert_eq!(cross.out_edges(centre).unwrap().len(), 4);

    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let feats = fixtures::random_features(&mut rng, 20, 30, 1000.0);
    let net = network_from_features(&feats, 50.0).unwrap();
    assert!(net.edges().len() >= 30);
    let mut expected: HashMap<NodeId, Vec<EdgeId>> = HashMap::new();
    for e in net.edges() {
        expected.entry(e.from()).or_default().push(e.id());
    }
    for n in net.nodes() {
        let want = expected.remove(&n.id).unwrap_or_default();
        assert_eq!(net.out_edges(n.id).unwrap(), want.as_slice());
    }
}

#[test]
fn path_geometry_examples() {
    let net = fixtures::build(&[
        feature(0, true, &[(0.0, -100.0), (0.0, 0.0)]),
        feature(1, true, &[(0.0, 0.0), (0.0, 100.0)]),
    ]);
    let single = net.path_geometry(&[EdgeId(0)]).unwrap();
    assert_eq!(single, net.edge(EdgeId(0)).unwrap().geometry());

    let poly = net.path_polyline(&[EdgeId(0), EdgeId(2)]).unwrap();
    assert_eq!(poly.len(), 3);
    let total: f64 = poly.windows(2).map(|w| planar_distance(w[0], w[1])).sum();
    assert_abs_diff_eq!(total, 200.0, epsilon = 1e-6);

    assert_eq!(
        net.path_geometry(&[EdgeId(2), EdgeId(0)]),
        Err(NetworkError::Disconnected { index: 1 })
    );
    assert_eq!(net.path_geometry(&[]), Err(NetworkError::EmptyPath));
}

#[test]
fn geojson_round_trip_and_snapping() {
    let mut feats = fixtures::cross_features(100.0);
    // Endpoint 0.3 m off the junction still snaps to it.
    feats.push(feature(9, true, &[(0.3, 0.0), (50.0, 50.0)]));
    let text = serde_json::to_string(&features_to_geojson(&feats)).unwrap();
    let net = parse_network_geojson(&text, 50.0).unwrap();
    assert_eq!(net.nodes().len(), 6);
    assert_eq!(net.edges().len(), 9);
    assert_eq!(
        net.edge(EdgeId(18)).unwrap().from(),
        net.edge(EdgeId(0)).unwrap().from()
    );
    assert!(net.edge(EdgeId(19)).is_err());
    assert_eq!(net.edge(EdgeId(1)).unwrap().reverse_of(), Some(EdgeId(0)));
}

#[test]
fn geojson_errors() {
    let bad = [
        r#"{"type":"Feature"}"#,
        r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":1,"oneway":true},"geometry":{"type":"Point","coordinates":[0,0]}}]}"#,
        r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":-1,"oneway":true},"geometry":{"type":"LineString","coordinates":[[0,0],[0,0.001]]}}]}"#,
        r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":1},"geometry":{"type":"LineString","coordinates":[[0,0],[0,0.001]]}}]}"#,
        r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"id":1,"oneway":true},"geometry":{"type":"LineString","coordinates":[[0,0]]}}]}"#,
        "not json",
    ];
    for text in bad {
        assert!(parse_network_geojson(text, 50.0).is_err(), "{text}");
    }
}

fn arb_network() -> impl Strategy<Value = RoadNetwork> {
    any::<u64>().prop_map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = fixtures::random_features(&mut rng, 15, 25, 800.0);
        network_from_features(&feats, 40.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn advance_stays_on_edge_and_is_deterministic(
        net in arb_network(),
        pick in any::<prop::sample::Index>(),
        frac in 0.0..=1.0f64,
        dist in 0.0..3000.0f64,
        seed in any::<u64>(),
        uturn in any::<bool>(),
    ) {
        let e = &net.edges()[pick.index(net.edges().len())];
        let pos = NetworkPosition { edge: e.id(), offset: frac * e.length() };
        let a = net.advance(pos, dist, uturn, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = net.advance(pos, dist, uturn, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&a, &b);
        let end_len = net.edge(a.end.edge).unwrap().length();
        prop_assert!(a.end.offset >= 0.0 && a.end.offset <= end_len);
        let mut chain = a.traversed.clone();
        chain.push(a.end.edge);
        prop_assert!(net.is_connected_path(&chain));
        if let Some(first) = a.traversed.first() {
            prop_assert_eq!(*first, e.id());
        }
    }

    #[test]
    fn chained_advances_compose_on_branch_free_path(
        a in 0.0..400.0f64, b in 0.0..400.0f64, seed in any::<u64>(),
    ) {
        let net = fixtures::build(&[
            feature(0, true, &[(0.0, -500.0), (0.0, -200.0)]),
            feature(1, true, &[(0.0, -200.0), (100.0, 0.0), (0.0, 500.0)]),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = NetworkPosition { edge: EdgeId(0), offset: 10.0 };
        let one = net.advance(start, a, false, &mut rng).unwrap();
        let two = net.advance(one.end, b, false, &mut rng).unwrap();
        let direct = net.advance(start, a + b, false, &mut rng).unwrap();
        prop_assert_eq!(two.end.edge, direct.end.edge);
        prop_assert!((two.end.offset - direct.end.offset).abs() < 1e-9);
    }

    #[test]
    fn radius_query_equals_brute_force(
        net in arb_network(),
        x in -450.0..450.0f64, y in -450.0..450.0f64, r in 0.5..200.0f64,
    ) {
        assert_matches_brute_force(&net, PlanarPoint::new(x, y), r);
    }
}
