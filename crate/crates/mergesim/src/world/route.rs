//! Polyline routes and arc-length positioning along them.

use serde::{Deserialize, Serialize};

use super::geo::{geo_distance, GeoPoint};
use super::WorldError;

/// Which of the two converging flows a route belongs to. Route B has merge
/// priority.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RouteLabel {
    A,
    B,
}

impl std::fmt::Display for RouteLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RouteLabel::A => write!(f, "A"),
            RouteLabel::B => write!(f, "B"),
        }
    }
}

/// A directed polyline route with precomputed cumulative geodesic lengths.
#[derive(Clone, Debug)]
pub struct Route {
    pub id: String,
    pub label: RouteLabel,
    pub polyline: Vec<GeoPoint>,
    /// cumulative[i] is the arc length from the first vertex to vertex i.
    cumulative: Vec<f64>,
    pub length_m: f64,
}

impl Route {
    pub fn new(id: String, label: RouteLabel, polyline: Vec<GeoPoint>) -> Result<Self, WorldError> {
        if polyline.len() < 2 {
            return Err(WorldError::PolylineTooShort { route_id: id });
        }
        let mut cumulative = Vec::with_capacity(polyline.len());
        cumulative.push(0.0);
        let mut total = 0.0;
        for pair in polyline.windows(2) {
            total += geo_distance(pair[0], pair[1]);
            cumulative.push(total);
        }
        Ok(Self {
            id,
            label,
            polyline,
            cumulative,
            length_m: total,
        })
    }

    /// Position at arc length `s` by linear interpolation along the polyline.
    /// `s` outside `[0, length_m]` is the route-overrun signal the engine
    /// consumes to despawn a vehicle.
    pub fn position_at(&self, s: f64) -> Result<GeoPoint, WorldError> {
        if !s.is_finite() || s < 0.0 || s > self.length_m {
            return Err(WorldError::RouteOverrun {
                route_id: self.id.clone(),
                s,
                length_m: self.length_m,
            });
        }
        // Find the segment containing s; partition_point gives the first
        // vertex with cumulative > s.
        let idx = self.cumulative.partition_point(|&c| c <= s);
        if idx >= self.cumulative.len() {
            return Ok(*self.polyline.last().unwrap());
        }
        let seg_start = idx - 1;
        let seg_len = self.cumulative[idx] - self.cumulative[seg_start];
        let t = if seg_len > 0.0 { (s - self.cumulative[seg_start]) / seg_len } else { 0.0 };
        let p0 = self.polyline[seg_start];
        let p1 = self.polyline[idx];
        Ok(GeoPoint::new(
            p0.lat + (p1.lat - p0.lat) * t,
            p0.lon + (p1.lon - p0.lon) * t,
        ))
    }
}
