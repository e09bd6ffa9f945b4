//! Probabilistic map-matching of GPS trajectories with a particle filter.
//!
//! A trajectory is matched onto a directed [`RoadNetwork`] by a sequential
//! Monte Carlo filter whose particles live on the network. The result is a
//! ranked list of [`CandidatePath`]s, each scored by the fraction of final
//! particles whose history follows it.
//!
//! Module map:
//! - [`geo`]: projection, planar distances, bearings.
//! - [`roadnet`]: the network graph, spatial queries and on-network movement.
//! - [`trajectory`]: GPS data model, CSV I/O and degradations.
//! - [`filter`]: the particle filter and candidate-path extraction.
//! - [`eval`]: holdout cross-validation, sensitivity sweeps, a deterministic baseline.
//! - [`simulate`]: synthetic ground truth.

pub mod eval;
pub mod filter;
pub mod fixtures;
pub mod geo;
pub mod rng;
pub mod roadnet;
pub mod simulate;
pub mod trajectory;

pub use eval::{crossvalidate, sweep, EvalReport, SweepReport};
pub use filter::{run_filter, CandidatePath, FilterError, FilterParams, MatchResult};
pub use geo::{GeoPoint, LocalProjection, PlanarPoint};
pub use roadnet::{EdgeId, NetworkPosition, NodeId, RoadNetwork};
pub use simulate::{simulate, GroundTruth, SimConfig};
pub use trajectory::{GpsPoint, Trajectory};
