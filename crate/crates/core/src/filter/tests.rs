use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::oracle::{exact_posterior, probability_of, OracleConfig};
use super::*;
use crate::fixtures::{self, planar_trajectory};
use crate::geo::{angle_difference, GeoPoint};

fn gps(x: f64, y: f64, bearing: f64) -> GpsPoint {
    GpsPoint {
        position: fixtures::anchor_projection().unproject_unchecked(PlanarPoint::new(x, y)),
        bearing,
        timestamp: 0.0,
    }
}

fn params(m: usize, seed: u64) -> FilterParams {
    FilterParams {
        particle_count: m,
        seed,
        ..FilterParams::default()
    }
}

fn set_at(edge: u64, offsets: &[f64]) -> ParticleSet {
    let w = 1.0 / offsets.len() as f64;
    ParticleSet {
        particles: offsets
            .iter()
            .map(|&offset| Particle {
                state: NetworkPosition {
                    edge: EdgeId(edge),
                    offset,
                },
                history: EdgeHistory::start(EdgeId(edge)),
                weight: w,
            })
            .collect(),
        step: 0,
    }
}

fn ids(v: &[u64]) -> Vec<EdgeId> {
    v.iter().copied().map(EdgeId).collect()
}

#[test]
fn default_params_validate() {
    let p = FilterParams::default();
    p.validate().unwrap();
    assert_eq!(p.particle_count, 1000);
    assert_eq!(p.transition_sigma_for(5.0), 2.0);
    assert_abs_diff_eq!(p.transition_sigma_for(100.0), 20.0);
}

#[test]
fn invalid_params_rejected() {
    let bad = [
        FilterParams {
            particle_count: 0,
            ..FilterParams::default()
        },
        FilterParams {
            measurement_sigma: 0.0,
            ..FilterParams::default()
        },
        FilterParams {
            init_pos_sigma: f64::NAN,
            ..FilterParams::default()
        },
        FilterParams {
            bearing_gate: 0.0,
            ..FilterParams::default()
        },
        FilterParams {
            bearing_gate: 181.0,
            ..FilterParams::default()
        },
        FilterParams {
            transition_sigma_scale: -0.1,
            ..FilterParams::default()
        },
    ];
    for p in bad {
        assert!(matches!(p.validate(), Err(FilterError::InvalidParams(_))), "{p:?}");
    }
}

#[test]
fn initialize_on_single_road() {
    let net = fixtures::straight_road(1000.0);
    let p = params(2000, 1);
    let set = initialize(&net, &gps(0.0, 0.0, 0.0), &p, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(set.len(), 2000);
    let offsets: Vec<f64> = set.particles.iter().map(|q| q.state.offset).collect();
    assert!(set.particles.iter().all(|q| q.state.edge == EdgeId(0)));
    assert!(set.particles.iter().all(|q| q.history.to_vec() == vec![EdgeId(0)]));
    assert!(set.particles.iter().all(|q| q.weight == 1.0 / 2000.0));
    let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
    let var = offsets.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / offsets.len() as f64;
    assert!((mean - 500.0).abs() < 1.0, "mean {mean}");
    assert!((var.sqrt() - 10.0).abs() < 0.6, "sd {}", var.sqrt());
}

#[test]
fn initialize_unmatchable_start() {
    let net = fixtures::straight_road(1000.0);
    let err = initialize(
        &net,
        &gps(80.0, 0.0, 0.0),
        &params(10, 0),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap_err();
    assert_eq!(err, FilterError::UnmatchableStart { radius: 50.0 });
}

#[test]
fn initialize_reports_gate_failure() {
    // Heading south on a northbound one-way road: the gate rejects nearly everything.
    let net = fixtures::straight_road(1000.0);
    let p = FilterParams {
        particle_count: 5,
        init_bearing_sigma: 1.0,
        ..FilterParams::default()
    };
    let err = initialize(&net, &gps(0.0, 0.0, 180.0), &p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    match err {
        FilterError::InitializationFailure {
            proposals,
            accepted,
            bearing_gate,
            ..
        } => {
            assert_eq!(proposals, 5000);
            assert_eq!(accepted, 0);
            assert_eq!(bearing_gate, 90.0);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err_message_names_gate(&p));
}

fn err_message_names_gate(p: &FilterParams) -> bool {
    let e = FilterError::InitializationFailure {
        proposals: 1,
        accepted: 0,
        snap_tolerance: p.snap_tolerance,
        bearing_gate: p.bearing_gate,
    };
    let s = e.to_string();
    s.contains("bearing gate 90") && s.contains("snap tolerance 2")
}

/// Acceptance share of road A by direct simulation of the proposal and the
/// two acceptance tests, with the roads treated as infinite lines.
fn parallel_roads_share(gap: f64, p: &FilterParams, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let pos = Normal::new(0.0, p.init_pos_sigma).unwrap();
    let brg = Normal::new(0.0, p.init_bearing_sigma).unwrap();
    let (mut a, mut b) = (0usize, 0usize);
    for _ in 0..samples {
        let x: f64 = pos.sample(&mut rng);
        let bearing: f64 = brg.sample(&mut rng);
        let da = (x + gap / 2.0).abs();
        let db = (x - gap / 2.0).abs();
        let ok_a = da <= p.snap_tolerance && angle_difference(bearing, 0.0) <= p.bearing_gate;
        let ok_b = db <= p.snap_tolerance && angle_difference(bearing, 180.0) <= p.bearing_gate;
        match (ok_a, ok_b) {
            (true, true) if db < da => b += 1,
            (true, _) => a += 1,
            (false, true) => b += 1,
            _ => {}
        }
    }
    a as f64 / (a + b) as f64
}

#[test]
fn initialize_between_opposing_roads() {
    let net = fixtures::parallel_opposing(20.0, 2000.0);
    let p = params(10_000, 0);
    let set = initialize(&net, &gps(0.0, 0.0, 0.0), &p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let on_a = set.particles.iter().filter(|q| q.state.edge == EdgeId(0)).count() as f64 / 10_000.0;
    let expected = parallel_roads_share(20.0, &p, 2_000_000);
    assert!(on_a > 0.95, "{on_a}");
    assert!((on_a - expected).abs() < 0.005, "{on_a} vs {expected}");
}

#[test]
fn initialize_picks_aligned_edge_of_pair() {
    let net = fixtures::y_junction();
    let set = initialize(
        &net,
        &gps(0.0, -200.0, 0.0),
        &params(5000, 0),
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();
    assert!(set.particles.iter().all(|q| q.state.edge == EdgeId(0)));
    let set = initialize(
        &net,
        &gps(0.0, -200.0, 180.0),
        &params(5000, 0),
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();
    assert!(set.particles.iter().all(|q| q.state.edge == EdgeId(1)));
}

#[test]
fn control_distance_examples() {
    let proj = LocalProjection::new(GeoPoint::new(0.0, 0.0).unwrap()).unwrap();
    let a = GpsPoint {
        position: GeoPoint::new(0.0, 0.0).unwrap(),
        bearing: 0.0,
        timestamp: 0.0,
    };
    assert_eq!(control_distance(&a, &a, &proj).unwrap(), 0.0);
    let b = GpsPoint {
        position: GeoPoint::new(100.0 / 111_132.9, 0.0).unwrap(),
        ..a
    };
    let d = control_distance(&a, &b, &proj).unwrap();
    assert!((d - 100.0).abs() <= 0.2, "{d}");
    assert_eq!(d, control_distance(&b, &a, &proj).unwrap());
}

#[test]
fn propagate_mean_displacement() {
    let net = fixtures::straight_road(1000.0);
    let p = FilterParams {
        particle_count: 10_000,
        transition_sigma: 5.0,
        transition_sigma_scale: 0.0,
        ..FilterParams::default()
    };
    let mut set = set_at(0, &vec![100.0; 10_000]);
    propagate(&net, &mut set, 50.0, &p, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let mean = set.particles.iter().map(|q| q.state.offset - 100.0).sum::<f64>() / 10_000.0;
    assert!((49.0..=51.0).contains(&mean), "{mean}");
    assert!(set.particles.iter().all(|q| q.weight == 1.0 / 10_000.0));
}

#[test]
fn propagate_clamps_negative_draws() {
    let net = fixtures::straight_road(1000.0);
    let p = FilterParams {
        transition_sigma: 100.0,
        transition_sigma_scale: 0.0,
        ..FilterParams::default()
    };
    let mut set = set_at(0, &vec![500.0; 2000]);
    propagate(&net, &mut set, 1.0, &p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(set.particles.iter().all(|q| q.state.offset >= 500.0));
    assert!(set.particles.iter().any(|q| q.state.offset == 500.0));
}

#[test]
fn propagate_zero_control_tiny_sigma() {
    let net = fixtures::straight_road(1000.0);
    let p = FilterParams {
        transition_sigma: 1e-12,
        transition_sigma_scale: 0.0,
        ..FilterParams::default()
    };
    let mut set = set_at(0, &[10.0, 20.0, 30.0]);
    propagate(&net, &mut set, 0.0, &p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for (q, o) in set.particles.iter().zip([10.0, 20.0, 30.0]) {
        assert_abs_diff_eq!(q.state.offset, o, epsilon = 1e-9);
    }
}

#[test]
fn propagate_extends_history_through_branches() {
    let net = fixtures::y_junction();
    let mut set = set_at(0, &vec![150.0; 1000]);
    propagate(
        &net,
        &mut set,
        100.0,
        &params(1000, 0),
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    for q in &set.particles {
        let h = q.history.to_vec();
        assert_eq!(*h.last().unwrap(), q.state.edge);
        assert!(net.is_connected_path(&h), "{h:?}");
        assert!(h == ids(&[0]) || h == ids(&[0, 2]) || h == ids(&[0, 4]), "{h:?}");
    }
}

#[test]
fn propagate_rejects_negative_control() {
    let net = fixtures::straight_road(100.0);
    let mut set = set_at(0, &[1.0]);
    let err = propagate(&net, &mut set, -1.0, &params(1, 0), &mut ChaCha8Rng::seed_from_u64(0));
    assert!(err.is_err());
}

#[test]
fn weigh_examples() {
    let net = fixtures::straight_road(1000.0);
    let p = FilterParams::default();
    // Road runs along x = 0 from y = -500; offset o sits at y = o - 500.
    let obs = gps(0.0, 0.0, 0.0);

    let mut set = set_at(0, &[495.0, 505.0]);
    weigh(&mut set, &obs, &p, &net).unwrap();
    assert_abs_diff_eq!(set.particles[0].weight, 0.5, epsilon = 1e-12);

    let mut set = set_at(0, &[500.0, 505.0]);
    weigh(&mut set, &obs, &p, &net).unwrap();
    let ratio = set.particles[0].weight / set.particles[1].weight;
    assert_abs_diff_eq!(ratio, 0.5f64.exp(), epsilon = 1e-9);
    assert_abs_diff_eq!(ratio, 1.6487, epsilon = 1e-4);
    assert_abs_diff_eq!(set.weight_sum(), 1.0, epsilon = 1e-12);

    let mut set = set_at(0, &[500.0, 550.0]);
    weigh(&mut set, &obs, &p, &net).unwrap();
    assert!(set.particles[1].weight / set.particles[0].weight < 2e-22);
}

#[test]
fn weigh_signals_degeneracy() {
    let net = fixtures::straight_road(10_000.0);
    let mut set = set_at(0, &[0.0, 1.0]);
    set.step = 4;
    let err = weigh(&mut set, &gps(0.0, 4000.0, 0.0), &FilterParams::default(), &net).unwrap_err();
    assert_eq!(err, FilterError::Degenerate { step: 4 });
}

#[test]
fn resample_uniform_counts_within_three_sigma() {
    let m = 10;
    let p = params(m, 0);
    let trials = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut counts = vec![0usize; m];
    for _ in 0..trials {
        let mut set = set_at(0, &(0..m).map(|i| i as f64).collect::<Vec<_>>());
        resample(&mut set, &p, &mut rng).unwrap();
        assert_eq!(set.len(), m);
        for q in &set.particles {
            counts[q.state.offset as usize] += 1;
        }
    }
    let n = (trials * m) as f64;
    let (mean, sd) = (n * 0.1, (n * 0.1 * 0.9).sqrt());
    for c in counts {
        assert!((c as f64 - mean).abs() <= 3.0 * sd, "{c}");
    }
}

#[test]
fn resample_point_mass() {
    let mut set = set_at(0, &[1.0, 2.0, 3.0]);
    for (q, w) in set.particles.iter_mut().zip([0.0, 1.0, 0.0]) {
        q.weight = w;
    }
    resample(&mut set, &params(3, 0), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(set
        .particles
        .iter()
        .all(|q| q.state.offset == 2.0 && q.weight == 1.0 / 3.0));
}

#[test]
fn resample_zero_weights_fails() {
    let mut set = set_at(0, &[1.0, 2.0]);
    set.particles.iter_mut().for_each(|q| q.weight = 0.0);
    let err = resample(&mut set, &params(2, 0), &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    assert_eq!(err, FilterError::ZeroWeights);
}

#[test]
fn resample_is_seeded() {
    let base = set_at(0, &[1.0, 2.0, 3.0, 4.0]);
    let run = || {
        let mut s = base.clone();
        resample(&mut s, &params(4, 0), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        s.particles.iter().map(|q| q.state.offset).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn extract_paths_counts_and_orders() {
    let mut set = set_at(0, &vec![0.0; 10_000]);
    let left = EdgeHistory::start(EdgeId(0)).push(EdgeId(2));
    for (i, q) in set.particles.iter_mut().enumerate() {
        if i < 3000 {
            // Distinct allocations with equal content must still group.
            q.history = EdgeHistory::start(EdgeId(0)).push(EdgeId(4));
        } else {
            q.history = left.clone();
        }
    }
    let paths = extract_paths(&set, 10_000);
    assert_eq!(paths.len(), 2);
    assert_eq!(paths[0].edges, ids(&[0, 2]));
    assert_eq!(paths[0].support, 7000);
    assert_abs_diff_eq!(paths[0].probability, 0.7);
    assert_abs_diff_eq!(paths[1].probability, 0.3);

    let set = set_at(3, &[0.0; 4]);
    let paths = extract_paths(&set, 4);
    assert_eq!(
        paths,
        vec![CandidatePath {
            edges: ids(&[3]),
            probability: 1.0,
            support: 4
        }]
    );
}

#[test]
fn extract_paths_breaks_ties_lexicographically() {
    let mut set = set_at(0, &[0.0; 4]);
    let hs = [ids(&[0, 4]), ids(&[0, 2]), ids(&[0, 4]), ids(&[0, 2])];
    for (q, h) in set.particles.iter_mut().zip(hs) {
        q.history = EdgeHistory::start(h[0]).push(h[1]);
    }
    let paths = extract_paths(&set, 4);
    assert_eq!(paths[0].edges, ids(&[0, 2]));
    assert_eq!(paths[1].edges, ids(&[0, 4]));
}

#[test]
fn run_filter_straight_road_single_candidate() {
    let net = fixtures::straight_road(1000.0);
    let traj = planar_trajectory(
        &(0..20)
            .map(|i| (i as f64, 0.0, -300.0 + 10.0 * i as f64))
            .collect::<Vec<_>>(),
    );
    let r = run_filter(&net, &traj, &params(500, 1)).unwrap();
    assert_eq!(r.candidates.len(), 1);
    assert_eq!(r.candidates[0].probability, 1.0);
    assert_eq!(r.steps.len(), 19);
    assert_eq!(r.recovery_events, 0);
    assert!(!r.is_segmented());
}

fn fork_axis_trajectory() -> Trajectory {
    planar_trajectory(&[
        (0.0, 0.0, -250.0),
        (1.0, 0.0, -200.0),
        (2.0, 0.0, -150.0),
        (3.0, 0.0, -60.0),
        (4.0, 0.0, 0.0),
    ])
}

#[test]
fn run_filter_symmetric_fork() {
    let net = fixtures::y_junction();
    let r = run_filter(&net, &fork_axis_trajectory(), &params(10_000, 3)).unwrap();
    assert_eq!(r.candidates.len(), 2);
    let left = r.candidates.iter().find(|c| c.edges == ids(&[0, 2])).unwrap();
    assert!((left.probability - 0.5).abs() <= 0.03, "{}", left.probability);
    let total: f64 = r.candidates.iter().map(|c| c.probability).sum();
    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
}

#[test]
fn run_filter_left_branch_wins() {
    let net = fixtures::y_junction();
    let traj = planar_trajectory(&[
        (0.0, 0.0, -250.0),
        (1.0, 0.0, -180.0),
        (2.0, -5.0, -90.0),
        (3.0, -10.0, 0.0),
        (4.0, -10.0, 80.0),
    ]);
    let mut last = 0.0;
    for m in [100, 1000, 10_000] {
        let r = run_filter(&net, &traj, &params(m, 11)).unwrap();
        assert_eq!(r.best().unwrap().edges, ids(&[0, 2]));
        last = r.best().unwrap().probability;
    }
    assert!(last > 0.999, "{last}");
}

#[test]
fn run_filter_recovers_from_degeneracy() {
    // Two disconnected northbound roads 300 m apart; the trace jumps across.
    let net = fixtures::build(&[
        fixtures::feature(0, true, &[(-150.0, -500.0), (-150.0, 500.0)]),
        fixtures::feature(1, true, &[(150.0, -500.0), (150.0, 500.0)]),
    ]);
    let traj = planar_trajectory(&[
        (0.0, -150.0, -100.0),
        (1.0, -150.0, -90.0),
        (2.0, 150.0, -80.0),
        (3.0, 150.0, -70.0),
        (4.0, 150.0, -60.0),
    ]);
    let r = run_filter(&net, &traj, &params(300, 0)).unwrap();
    assert_eq!(r.recovery_events, 1);
    assert!(r.is_segmented());
    assert_eq!(r.segment_start, 2);
    assert!(r.steps[1].recovered && r.steps[1].ess == 0.0);
    assert_eq!(
        r.candidates,
        vec![CandidatePath {
            edges: ids(&[2]),
            probability: 1.0,
            support: 300
        }]
    );
}

#[test]
fn run_filter_reports_failed_recovery() {
    let net = fixtures::straight_road(1000.0);
    let traj = planar_trajectory(&[(0.0, 0.0, -100.0), (1.0, 400.0, -100.0)]);
    let err = run_filter(&net, &traj, &params(50, 0)).unwrap_err();
    assert!(matches!(err, FilterError::RecoveryFailed { step: 1, .. }), "{err:?}");
}

#[test]
fn run_filter_is_deterministic_across_thread_counts() {
    let net = fixtures::grid_network(5, 100.0);
    let traj = planar_trajectory(
        &(0..30)
            .map(|i| (i as f64, -200.0 + 10.0 * i as f64, 1.5))
            .collect::<Vec<_>>(),
    );
    let p = params(2000, 42);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_filter(&net, &traj, &p).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = run_filter(&net, &traj, &FilterParams { seed: 43, ..p.clone() }).unwrap();
    assert_ne!(a.steps, c.steps);
}

#[test]
fn adaptive_resampling_ends_uniform() {
    let net = fixtures::y_junction();
    let p = FilterParams {
        resampling: Resampling::Adaptive,
        ..params(2000, 5)
    };
    let mut last = None;
    let r = run_filter_observed(&net, &fork_axis_trajectory(), &p, |stage, set| {
        last = Some((stage, set.particles.iter().all(|q| q.weight == 1.0 / 2000.0)));
    })
    .unwrap();
    assert_eq!(last, Some((Stage::Resampled, true)));
    let total: usize = r.candidates.iter().map(|c| c.support).sum();
    assert_eq!(total, 2000);
}

#[test]
fn observed_run_keeps_invariants() {
    let net = fixtures::grid_network(4, 100.0);
    let traj = planar_trajectory(
        &(0..25)
            .map(|i| (i as f64 * 2.0, -150.0 + 12.0 * i as f64, -48.0))
            .collect::<Vec<_>>(),
    );
    let p = params(500, 9);
    let r = run_filter_observed(&net, &traj, &p, |stage, set| {
        for q in &set.particles {
            let h = q.history.to_vec();
            assert_eq!(*h.last().unwrap(), q.state.edge);
            assert!(net.is_connected_path(&h));
        }
        match stage {
            Stage::Weighed => assert!((set.weight_sum() - 1.0).abs() < 1e-9),
            Stage::Resampled | Stage::Initialized | Stage::Reinitialized => {
                assert_eq!(set.len(), 500);
                assert!(set.particles.iter().all(|q| q.weight == 1.0 / 500.0));
            }
            Stage::Propagated => {}
        }
    })
    .unwrap();
    let total: f64 = r.candidates.iter().map(|c| c.probability).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn oracle_branch_free_network() {
    let net = fixtures::straight_road(1000.0);
    let traj = planar_trajectory(&[(0.0, 0.0, -200.0), (1.0, 0.0, -150.0), (2.0, 0.0, -100.0)]);
    let post = exact_posterior(&net, &traj, &FilterParams::default(), &OracleConfig::default()).unwrap();
    assert_eq!(post.len(), 1);
    assert_abs_diff_eq!(post[0].probability, 1.0, epsilon = 1e-12);
}

#[test]
fn oracle_symmetric_fork() {
    let net = fixtures::y_junction();
    let post = exact_posterior(
        &net,
        &fork_axis_trajectory(),
        &FilterParams::default(),
        &OracleConfig::default(),
    )
    .unwrap();
    assert_abs_diff_eq!(probability_of(&post, &ids(&[0, 2])), 0.5, epsilon = 1e-9);
    assert_abs_diff_eq!(probability_of(&post, &ids(&[0, 4])), 0.5, epsilon = 1e-9);
}

pub(crate) fn asymmetric_fork_trajectory() -> Trajectory {
    planar_trajectory(&[
        (0.0, 0.0, -260.0),
        (1.0, 0.0, -200.0),
        (2.0, 0.0, -140.0),
        (3.0, -5.0, -40.0),
    ])
}

#[test]
fn oracle_asymmetric_fork_matches_gaussian_ratio() {
    let net = fixtures::y_junction();
    let p = FilterParams {
        measurement_sigma: 10.0,
        ..FilterParams::default()
    };
    let post = exact_posterior(&net, &asymmetric_fork_trajectory(), &p, &OracleConfig::default()).unwrap();
    let left = probability_of(&post, &ids(&[0, 2]));
    let right = probability_of(&post, &ids(&[0, 4]));
    let e = std::f64::consts::E;
    assert_abs_diff_eq!(left, e / (1.0 + e), epsilon = 1e-3);
    assert_abs_diff_eq!(right, 1.0 / (1.0 + e), epsilon = 1e-3);
    assert_abs_diff_eq!(left / right, ((225.0 - 25.0) / 200.0f64).exp(), epsilon = 1e-2);
}

#[test]
fn oracle_rejects_large_instances() {
    let net = fixtures::grid_network(3, 100.0);
    let traj = planar_trajectory(&[(0.0, 0.0, -100.0), (1.0, 10.0, -100.0)]);
    assert!(matches!(
        exact_posterior(&net, &traj, &FilterParams::default(), &OracleConfig::default()),
        Err(oracle::OracleError::TooManyEdges { .. })
    ));
    let net = fixtures::straight_road(1000.0);
    let traj = planar_trajectory(&(0..6).map(|i| (i as f64, 0.0, i as f64)).collect::<Vec<_>>());
    assert!(matches!(
        exact_posterior(&net, &traj, &FilterParams::default(), &OracleConfig::default()),
        Err(oracle::OracleError::TooManyObservations { .. })
    ));
}

#[test]
fn filter_agrees_with_oracle_on_fork() {
    let net = fixtures::y_junction();
    let p = FilterParams {
        measurement_sigma: 10.0,
        ..params(20_000, 4)
    };
    let traj = asymmetric_fork_trajectory();
    let post = exact_posterior(&net, &traj, &p, &OracleConfig::default()).unwrap();
    let r = run_filter(&net, &traj, &p).unwrap();
    let l1 = oracle::l1_distance(&r.candidates, &post);
    assert!(l1 < 0.05, "{l1}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn run_filter_probabilities_partition(seed in any::<u64>(), m in 1usize..300, jitter in 0.0f64..8.0) {
        let net = fixtures::grid_network(3, 100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<(f64, f64, f64)> = (0..10)
            .map(|i| (i as f64, -90.0 + 15.0 * i as f64 + rng.random_range(-jitter..=jitter), rng.random_range(-jitter..=jitter)))
            .collect();
        let traj = planar_trajectory(&samples);
        let r = run_filter(&net, &traj, &params(m, seed)).unwrap();
        let total: f64 = r.candidates.iter().map(|c| c.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let supports: usize = r.candidates.iter().map(|c| c.support).sum();
        prop_assert_eq!(supports, m);
        for c in &r.candidates {
            prop_assert!(net.is_connected_path(&c.edges));
            prop_assert_eq!(c.probability, c.support as f64 / m as f64);
        }
        for w in r.candidates.windows(2) {
            prop_assert!(w[0].edges != w[1].edges);
            prop_assert!(w[0].support >= w[1].support);
        }
    }

    #[test]
    fn resample_preserves_history_mass(seed in any::<u64>()) {
        // Each history's expected post-resample support is M times its weight mass.
        let weights = [0.05, 0.15, 0.3, 0.5];
        let m = 4;
        let trials = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = [0usize; 4];
        for _ in 0..trials {
            let mut set = set_at(0, &[0.0, 1.0, 2.0, 3.0]);
            for (q, w) in set.particles.iter_mut().zip(weights) {
                q.weight = w;
            }
            resample(&mut set, &params(m, 0), &mut rng).unwrap();
            for q in &set.particles {
                counts[q.state.offset as usize] += 1;
            }
        }
        let n = (trials * m) as f64;
        for (c, w) in counts.iter().zip(weights) {
            let sd = (n * w * (1.0 - w)).sqrt();
            prop_assert!((*c as f64 - n * w).abs() <= 4.0 * sd);
        }
    }
}
