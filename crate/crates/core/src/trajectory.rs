//! GPS trajectories: the data model, CSV I/O, and the degradations used by
//! the evaluation sweeps (noise injection, sampling-rate reduction, holdout).

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{make_projection, GeoPoint, PlanarPoint};

pub const CSV_HEADER: [&str; 4] = ["timestamp", "lat", "lon", "bearing"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("expected header `timestamp,lat,lon,bearing`, found `{0}`")]
    Header(String),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: {field} = {value} is out of range")]
    OutOfRange { line: u64, field: &'static str, value: f64 },
    #[error("line {line}: timestamp {timestamp} does not increase over line {previous_line}")]
    NonIncreasing {
        line: u64,
        previous_line: u64,
        timestamp: f64,
    },
    #[error("point {index}: {message}")]
    InvalidPoint { index: usize, message: String },
    #[error("trajectory has {0} point(s); at least 2 are required")]
    TooShort(usize),
    #[error("{0}")]
    InvalidParameter(String),
}

/// One GPS fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub position: GeoPoint,
    /// Degrees clockwise from north, in `[0, 360)`.
    pub bearing: f64,
    /// Seconds.
    pub timestamp: f64,
}

impl GpsPoint {
    fn check(&self) -> Result<(), String> {
        self.position.validate().map_err(|e| e.to_string())?;
        if !(self.bearing.is_finite() && (0.0..360.0).contains(&self.bearing)) {
            return Err(format!("bearing {} outside [0, 360)", self.bearing));
        }
        if !self.timestamp.is_finite() {
            return Err("non-finite timestamp".into());
        }
        Ok(())
    }
}

/// An ordered sequence of at least two fixes with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GpsPoint>", into = "Vec<GpsPoint>")]
pub struct Trajectory {
    points: Vec<GpsPoint>,
}

impl TryFrom<Vec<GpsPoint>> for Trajectory {
    type Error = TrajectoryError;
    fn try_from(points: Vec<GpsPoint>) -> Result<Self, Self::Error> {
        Trajectory::new(points)
    }
}

impl From<Trajectory> for Vec<GpsPoint> {
    fn from(t: Trajectory) -> Self {
        t.points
    }
}

impl Trajectory {
    pub fn new(points: Vec<GpsPoint>) -> Result<Self, TrajectoryError> {
        if points.len() < 2 {
            return Err(TrajectoryError::TooShort(points.len()));
        }
        for (index, p) in points.iter().enumerate() {
            p.check()
                .map_err(|message| TrajectoryError::InvalidPoint { index, message })?;
        }
        if let Some(i) = points.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(TrajectoryError::InvalidPoint {
                index: i + 1,
                message: "timestamp does not increase".into(),
            });
        }
        Ok(Trajectory { points })
    }

    pub fn points(&self) -> &[GpsPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> &GpsPoint {
        &self.points[0]
    }

    pub fn duration(&self) -> f64 {
        self.points[self.points.len() - 1].timestamp - self.points[0].timestamp
    }

    /// CSV with the standard header. Numbers use the shortest representation
    /// that round-trips, so parse followed by write is the identity on files
    /// written here.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(32 * (self.points.len() + 1));
        out.push_str(&CSV_HEADER.join(","));
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.timestamp, p.position.lat, p.position.lon, p.bearing
            ));
        }
        out
    }
}

/// Parses the trajectory CSV (`timestamp,lat,lon,bearing`). Errors carry the
/// 1-based line number of the offending row.
pub fn parse_trajectory(text: &str) -> Result<Trajectory, TrajectoryError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| TrajectoryError::Header(e.to_string()))?
        .clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(TrajectoryError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut points: Vec<GpsPoint> = Vec::new();
    let mut prev_line = 0u64;
    for record in reader.records() {
        let record = record.map_err(|e| TrajectoryError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &'static str| -> Result<f64, TrajectoryError> {
            let raw = record.get(i).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| TrajectoryError::Malformed {
                line,
                message: format!("cannot parse {name} `{raw}`"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(TrajectoryError::OutOfRange {
                    line,
                    field: name,
                    value: v,
                })
            }
        };
        let timestamp = field(0, "timestamp")?;
        let lat = field(1, "lat")?;
        let lon = field(2, "lon")?;
        let bearing = field(3, "bearing")?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(TrajectoryError::OutOfRange {
                line,
                field: "lat",
                value: lat,
            });
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(TrajectoryError::OutOfRange {
                line,
                field: "lon",
                value: lon,
            });
        }
        if !(0.0..360.0).contains(&bearing) {
            return Err(TrajectoryError::OutOfRange {
                line,
                field: "bearing",
                value: bearing,
            });
        }
        if let Some(last) = points.last() {
            if timestamp <= last.timestamp {
                return Err(TrajectoryError::NonIncreasing {
                    line,
                    previous_line: prev_line,
                    timestamp,
                });
            }
        }
        points.push(GpsPoint {
            position: GeoPoint { lat, lon },
            bearing,
            timestamp,
        });
        prev_line = line;
    }
    Trajectory::new(points)
}

/// Displaces every position by independent zero-mean Gaussian offsets of
/// standard deviation `sigma` meters along the local east and north axes.
pub fn perturb<R: Rng + ?Sized>(traj: &Trajectory, sigma: f64, rng: &mut R) -> Result<Trajectory, TrajectoryError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(TrajectoryError::InvalidParameter(format!(
            "noise sigma must be non-negative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(traj.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    let mut points = traj.points.clone();
    for (index, p) in points.iter_mut().enumerate() {
        let dx = normal.sample(rng);
        let dy = normal.sample(rng);
        let local = make_projection(p.position).map_err(|e| TrajectoryError::InvalidPoint {
            index,
            message: e.to_string(),
        })?;
        p.position = local.unproject_unchecked(PlanarPoint::new(dx, dy));
        p.check()
            .map_err(|message| TrajectoryError::InvalidPoint { index, message })?;
    }
    Ok(Trajectory { points })
}

/// Keeps the first point, then every point at least `interval` seconds after
/// the last kept one, and always the final point.
pub fn downsample(traj: &Trajectory, interval: f64) -> Result<Trajectory, TrajectoryError> {
    if !(interval.is_finite() && interval > 0.0) {
        return Err(TrajectoryError::InvalidParameter(format!(
            "interval must be positive, got {interval}"
        )));
    }
    // Tolerate round-off in decimal timestamps.
    let eps = 1e-9 * interval.max(1.0);
    let pts = &traj.points;
    let mut kept = vec![pts[0]];
    for p in &pts[1..] {
        if p.timestamp - kept[kept.len() - 1].timestamp >= interval - eps {
            kept.push(*p);
        }
    }
    let last = pts[pts.len() - 1];
    if kept[kept.len() - 1].timestamp != last.timestamp {
        kept.push(last);
    }
    Trajectory::new(kept)
}

/// Training and held-out parts of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutSplit {
    pub train: Trajectory,
    /// Held-out points with their index in the original trajectory, ascending.
    pub test: Vec<(usize, GpsPoint)>,
}

/// Number of points [`split_holdout`] removes: `floor(fraction * n)`.
pub fn holdout_count(n: usize, fraction: f64) -> usize {
    // The epsilon absorbs products such as 0.29 * 100 = 28.999999999999996.
    (fraction * n as f64 + 1e-9).floor() as usize
}

/// Moves `floor(fraction * N)` points, drawn uniformly without replacement from
/// indices `1..N`, into the test set. The first point always stays in training.
pub fn split_holdout<R: Rng + ?Sized>(
    traj: &Trajectory,
    fraction: f64,
    rng: &mut R,
) -> Result<HoldoutSplit, TrajectoryError> {
    if !(fraction > 0.0 && fraction < 0.5) {
        return Err(TrajectoryError::InvalidParameter(format!(
            "holdout fraction must lie in (0, 0.5), got {fraction}"
        )));
    }
    let n = traj.len();
    let k = holdout_count(n, fraction);
    if n - k < 2 {
        return Err(TrajectoryError::TooShort(n));
    }
    let mut held = vec![false; n];
    for i in sample(rng, n - 1, k).into_iter() {
        held[i + 1] = true;
    }
    let mut train = Vec::with_capacity(n - k);
    let mut test = Vec::with_capacity(k);
    for (i, p) in traj.points.iter().enumerate() {
        if held[i] {
            test.push((i, *p));
        } else {
            train.push(*p);
        }
    }
    Ok(HoldoutSplit {
        train: Trajectory { points: train },
        test,
    })
}
