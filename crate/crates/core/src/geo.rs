//! Coordinate handling: WGS84 points, a local equirectangular projection,
//! planar distances, point-to-segment geometry and bearings.
//!
//! Every distance in the crate is measured in the planar frame of a
//! [`LocalProjection`]. At borough scale the equirectangular approximation
//! stays well under 0.1% error within 50 km of the origin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Meters per degree of latitude used by the local projection.
pub const METERS_PER_DEG_LAT: f64 = 111_132.9;
/// Meters per degree of longitude at the equator.
pub const METERS_PER_DEG_LON_EQUATOR: f64 = 111_319.5;
/// Radius of the region around the projection origin where `project` is accepted.
pub const PROJECTION_ENVELOPE_M: f64 = 100_000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("invalid coordinate: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("non-finite planar coordinate ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("point is {distance:.0} m from the projection origin (limit {limit:.0} m)")]
    OutOfEnvelope { distance: f64, limit: f64 },
    #[error("bearing is undefined for coincident points")]
    CoincidentPoints,
}

/// A WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let p = GeoPoint { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let ok = self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon);
        if ok {
            Ok(())
        } else {
            Err(GeoError::InvalidCoordinate {
                lat: self.lat,
                lon: self.lon,
            })
        }
    }
}

/// Meters east (`x`) and north (`y`) of a projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn lerp(self, other: PlanarPoint, t: f64) -> PlanarPoint {
        PlanarPoint {
            x: self.x + t * (other.x - self.x),
            y: self.y + t * (other.y - self.y),
        }
    }
}

/// Equirectangular projection anchored at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalProjection {
    origin: GeoPoint,
    meters_per_deg_lat: f64,
    meters_per_deg_lon: f64,
}

pub fn make_projection(origin: GeoPoint) -> Result<LocalProjection, GeoError> {
    origin.validate()?;
    let meters_per_deg_lon = METERS_PER_DEG_LON_EQUATOR * origin.lat.to_radians().cos();
    if meters_per_deg_lon <= 0.0 {
        // cos(±90°) collapses the longitude axis.
        return Err(GeoError::InvalidCoordinate {
            lat: origin.lat,
            lon: origin.lon,
        });
    }
    Ok(LocalProjection {
        origin,
        meters_per_deg_lat: METERS_PER_DEG_LAT,
        meters_per_deg_lon,
    })
}

impl LocalProjection {
    pub fn new(origin: GeoPoint) -> Result<Self, GeoError> {
        make_projection(origin)
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn meters_per_deg_lat(&self) -> f64 {
        self.meters_per_deg_lat
    }

    pub fn meters_per_deg_lon(&self) -> f64 {
        self.meters_per_deg_lon
    }

    /// Projects without the envelope check. Callers on hot paths that already
    /// know the point is near the origin use this.
    pub fn project_unchecked(&self, p: GeoPoint) -> PlanarPoint {
        PlanarPoint {
            x: (p.lon - self.origin.lon) * self.meters_per_deg_lon,
            y: (p.lat - self.origin.lat) * self.meters_per_deg_lat,
        }
    }

    pub fn project(&self, p: GeoPoint) -> Result<PlanarPoint, GeoError> {
        p.validate()?;
        let q = self.project_unchecked(p);
        let distance = q.x.hypot(q.y);
        if distance > PROJECTION_ENVELOPE_M {
            return Err(GeoError::OutOfEnvelope {
                distance,
                limit: PROJECTION_ENVELOPE_M,
            });
        }
        Ok(q)
    }

    pub fn unproject(&self, p: PlanarPoint) -> Result<GeoPoint, GeoError> {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(GeoError::NonFinite { x: p.x, y: p.y });
        }
        Ok(self.unproject_unchecked(p))
    }

    pub fn unproject_unchecked(&self, p: PlanarPoint) -> GeoPoint {
        GeoPoint {
            lat: self.origin.lat + p.y / self.meters_per_deg_lat,
            lon: self.origin.lon + p.x / self.meters_per_deg_lon,
        }
    }
}

pub fn project(proj: &LocalProjection, p: GeoPoint) -> Result<PlanarPoint, GeoError> {
    proj.project(p)
}

pub fn unproject(proj: &LocalProjection, p: PlanarPoint) -> Result<GeoPoint, GeoError> {
    proj.unproject(p)
}

#[inline]
pub fn planar_distance(a: PlanarPoint, b: PlanarPoint) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Closest point on segment `a`–`b` to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProjection {
    pub closest: PlanarPoint,
    /// Position of `closest` along the segment, clamped to `[0, 1]`.
    pub t: f64,
    pub dist: f64,
}

/// Projects `p` onto the segment `a`–`b`. A degenerate segment is treated as
/// the single point `a` with `t = 0`.
#[inline]
pub fn point_segment_projection(p: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> SegmentProjection {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let closest = PlanarPoint {
        x: a.x + t * dx,
        y: a.y + t * dy,
    };
    SegmentProjection {
        closest,
        t,
        dist: planar_distance(p, closest),
    }
}

/// Heading of a planar displacement in degrees clockwise from north, in `[0, 360)`.
pub fn planar_heading(dx: f64, dy: f64) -> Option<f64> {
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    Some(normalize_degrees(dx.atan2(dy).to_degrees()))
}

/// Heading from `a` to `b`, measured on a local plane scaled at the mean latitude
/// so that `bearing(a, b)` and `bearing(b, a)` are exactly opposite.
pub fn bearing(a: GeoPoint, b: GeoPoint) -> Result<f64, GeoError> {
    let mean_lat = 0.5 * (a.lat + b.lat);
    let dx = (b.lon - a.lon) * METERS_PER_DEG_LON_EQUATOR * mean_lat.to_radians().cos();
    let dy = (b.lat - a.lat) * METERS_PER_DEG_LAT;
    planar_heading(dx, dy).ok_or(GeoError::CoincidentPoints)
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn normalize_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Absolute angular difference in degrees, in `[0, 180]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = normalize_degrees(a - b);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}
