//! WGS84 coordinates, haversine distances, and the local tangent-plane
//! projection used to map the scenario onto a flat working plane.

use serde::{Deserialize, Serialize};

use super::WorldError;

/// Mean Earth radius in meters (IUGG mean radius R1).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// A WGS84 geographic coordinate in degrees.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    /// Checks the WGS84 range invariants, naming `field` in the error.
    pub fn validate(&self, field: &str) -> Result<(), WorldError> {
        if !self.lat.is_finite() || self.lat < -90.0 || self.lat > 90.0 {
            return Err(WorldError::InvalidCoordinate {
                field: field.to_string(),
                value: self.lat,
                axis: "lat",
            });
        }
        if !self.lon.is_finite() || self.lon < -180.0 || self.lon > 180.0 {
            return Err(WorldError::InvalidCoordinate {
                field: field.to_string(),
                value: self.lon,
                axis: "lon",
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for GeoPoint {
    /// Renders in the log format `GeoPoint{lat|lon=[41.280493,1.974944]}`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GeoPoint{{lat|lon=[{:.6},{:.6}]}}", self.lat, self.lon)
    }
}

/// A point on the local working plane, meters east/north of the projection
/// origin (plus the configured offsets).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

/// Local tangent-plane (equirectangular) projection anchored at the scenario
/// center. Offsets are applied additively after projection and carried for
/// config fidelity only.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub center: GeoPoint,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl Projection {
    pub fn new(center: GeoPoint, offset_x: f64, offset_y: f64) -> Self {
        Self { center, offset_x, offset_y }
    }
}

/// Projects `p` onto the local plane:
/// x = R cos(center.lat) dlon + offset_x, y = R dlat + offset_y.
///
/// `p` must be a valid coordinate within one degree of the projection center;
/// anything else is an input error.
pub fn project(p: GeoPoint, proj: &Projection) -> Result<PlanarPoint, WorldError> {
    p.validate("point")?;
    proj.center.validate("projection.center")?;
    if (p.lat - proj.center.lat).abs() > 1.0 || (p.lon - proj.center.lon).abs() > 1.0 {
        return Err(WorldError::OutsideProjectionDomain {
            lat: p.lat,
            lon: p.lon,
        });
    }
    let x = EARTH_RADIUS_M * proj.center.lat.to_radians().cos() * (p.lon - proj.center.lon).to_radians();
    let y = EARTH_RADIUS_M * (p.lat - proj.center.lat).to_radians();
    Ok(PlanarPoint {
        x: x + proj.offset_x,
        y: y + proj.offset_y,
    })
}

/// Inverse of [`project`].
pub fn unproject(p: PlanarPoint, proj: &Projection) -> GeoPoint {
    let y = p.y - proj.offset_y;
    let x = p.x - proj.offset_x;
    let lat = proj.center.lat + (y / EARTH_RADIUS_M).to_degrees();
    let lon = proj.center.lon + (x / (EARTH_RADIUS_M * proj.center.lat.to_radians().cos())).to_degrees();
    GeoPoint::new(lat, lon)
}

/// Haversine great-circle distance in meters.
pub fn geo_distance(p1: GeoPoint, p2: GeoPoint) -> f64 {
    let lat1 = p1.lat.to_radians();
    let lat2 = p2.lat.to_radians();
    let dlat = (p2.lat - p1.lat).to_radians();
    let dlon = (p2.lon - p1.lon).to_radians();
    let a = (dlat * 0.5).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon * 0.5).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().atan2((1.0 - a).sqrt())
}

/// An axis-aligned (in lat/lon) geographic rectangle given by two opposite
/// corners in either order.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoRectangle {
    #[serde(rename = "a")]
    pub corner_a: GeoPoint,
    #[serde(rename = "b")]
    pub corner_b: GeoPoint,
}

impl GeoRectangle {
    pub fn new(corner_a: GeoPoint, corner_b: GeoPoint) -> Self {
        Self { corner_a, corner_b }
    }

    fn lat_range(&self) -> (f64, f64) {
        (
            self.corner_a.lat.min(self.corner_b.lat),
            self.corner_a.lat.max(self.corner_b.lat),
        )
    }

    fn lon_range(&self) -> (f64, f64) {
        (
            self.corner_a.lon.min(self.corner_b.lon),
            self.corner_a.lon.max(self.corner_b.lon),
        )
    }

    /// Closed-interval containment on lat and lon, independent of corner order.
    pub fn contains(&self, p: GeoPoint) -> bool {
        let (lat_min, lat_max) = self.lat_range();
        let (lon_min, lon_max) = self.lon_range();
        lat_min <= p.lat && p.lat <= lat_max && lon_min <= p.lon && p.lon <= lon_max
    }

    /// True when the segment p0-p1 (straight in lat/lon space) touches the
    /// rectangle. Standard slab clipping with lon as x and lat as y.
    pub fn intersects_segment(&self, p0: GeoPoint, p1: GeoPoint) -> bool {
        let (lat_min, lat_max) = self.lat_range();
        let (lon_min, lon_max) = self.lon_range();
        let mut t_min = 0.0_f64;
        let mut t_max = 1.0_f64;
        for (start, delta, lo, hi) in [
            (p0.lon, p1.lon - p0.lon, lon_min, lon_max),
            (p0.lat, p1.lat - p0.lat, lat_min, lat_max),
        ] {
            if delta == 0.0 {
                if start < lo || start > hi {
                    return false;
                }
            } else {
                let mut t0 = (lo - start) / delta;
                let mut t1 = (hi - start) / delta;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                t_min = t_min.max(t0);
                t_max = t_max.min(t1);
                if t_min > t_max {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RECT_A: GeoPoint = GeoPoint { lat: 41.28105, lon: 1.97384 };
    const RECT_B: GeoPoint = GeoPoint { lat: 41.27961, lon: 1.97701 };
    // Independent haversine oracle for the rectangle corner pair, computed
    // ahead of the implementation.
    const CORNER_DIST_ORACLE_M: f64 = 309.5260015553658;

    fn castelldefels_projection() -> Projection {
        Projection::new(GeoPoint::new(41.16, 1.58), 0.0, 0.0)
    }

    #[test]
    fn project_center_is_origin() {
        let proj = castelldefels_projection();
        let p = project(proj.center, &proj).unwrap();
        assert_eq!(p.x, 0.0);
        assert_eq!(p.y, 0.0);
    }

    #[test]
    fn project_applies_offsets() {
        let proj = Projection::new(GeoPoint::new(41.16, 1.58), -411_320.95, -4_568_671.76);
        let p = project(proj.center, &proj).unwrap();
        assert_eq!(p.x, -411_320.95);
        assert_eq!(p.y, -4_568_671.76);
    }

    #[test]
    fn project_round_trips() {
        let proj = castelldefels_projection();
        let p = GeoPoint::new(41.28039945484303, 1.975863217521691);
        let back = unproject(project(p, &proj).unwrap(), &proj);
        assert!((back.lat - p.lat).abs() < 1e-9);
        assert!((back.lon - p.lon).abs() < 1e-9);
    }

    #[test]
    fn project_rejects_far_points() {
        let proj = castelldefels_projection();
        assert!(matches!(
            project(GeoPoint::new(52.5, 13.3), &proj),
            Err(WorldError::OutsideProjectionDomain { .. })
        ));
        assert!(project(GeoPoint::new(91.0, 0.0), &proj).is_err());
    }

    #[test]
    fn planar_distance_tracks_haversine() {
        let proj = castelldefels_projection();
        let pa = project(RECT_A, &proj).unwrap();
        let pb = project(RECT_B, &proj).unwrap();
        let planar = ((pa.x - pb.x).powi(2) + (pa.y - pb.y).powi(2)).sqrt();
        let hav = geo_distance(RECT_A, RECT_B);
        assert!((planar - hav).abs() / hav < 0.002, "planar {planar} vs haversine {hav}");
    }

    #[test]
    fn distance_reflexive() {
        let p = GeoPoint::new(41.28, 1.97);
        assert_eq!(geo_distance(p, p), 0.0);
    }

    #[test]
    fn distance_matches_oracle() {
        let d = geo_distance(RECT_A, RECT_B);
        assert!(
            (d - CORNER_DIST_ORACLE_M).abs() / CORNER_DIST_ORACLE_M < 1e-6,
            "got {d}"
        );
    }

    #[test]
    fn rectangle_contains_corner_and_rsu() {
        let rect = GeoRectangle::new(RECT_A, RECT_B);
        assert!(rect.contains(RECT_A));
        assert!(rect.contains(GeoPoint::new(41.28039945484303, 1.975863217521691)));
        assert!(!rect.contains(GeoPoint::new(41.29, 1.975)));
    }

    #[test]
    fn segment_intersection() {
        let rect = GeoRectangle::new(RECT_A, RECT_B);
        // crosses the rectangle without a vertex inside
        assert!(rect.intersects_segment(
            GeoPoint::new(41.2790, 1.9750),
            GeoPoint::new(41.2820, 1.9755),
        ));
        assert!(!rect.intersects_segment(
            GeoPoint::new(41.2900, 1.9700),
            GeoPoint::new(41.2900, 1.9800),
        ));
    }

    #[test]
    fn geopoint_display_matches_log_format() {
        let p = GeoPoint::new(41.280493, 1.974944);
        assert_eq!(p.to_string(), "GeoPoint{lat|lon=[41.280493,1.974944]}");
    }

    proptest! {
        #[test]
        fn round_trip_within_5km(dx in -5000.0f64..5000.0, dy in -5000.0f64..5000.0) {
            let proj = castelldefels_projection();
            let p = unproject(PlanarPoint { x: dx, y: dy }, &proj);
            let back = unproject(project(p, &proj).unwrap(), &proj);
            prop_assert!((back.lat - p.lat).abs() < 1e-9);
            prop_assert!((back.lon - p.lon).abs() < 1e-9);
        }

        #[test]
        fn planar_close_to_haversine_near_center(
            x1 in -2500.0f64..2500.0, y1 in -2500.0f64..2500.0,
            x2 in -2500.0f64..2500.0, y2 in -2500.0f64..2500.0,
        ) {
            let proj = castelldefels_projection();
            let g1 = unproject(PlanarPoint { x: x1, y: y1 }, &proj);
            let g2 = unproject(PlanarPoint { x: x2, y: y2 }, &proj);
            let hav = geo_distance(g1, g2);
            prop_assume!(hav > 1.0);
            let planar = ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt();
            prop_assert!((planar - hav).abs() / hav < 0.002);
        }

        #[test]
        fn distance_symmetric(lat1 in 41.0f64..42.0, lon1 in 1.0f64..3.0,
                              lat2 in 41.0f64..42.0, lon2 in 1.0f64..3.0) {
            let p1 = GeoPoint::new(lat1, lon1);
            let p2 = GeoPoint::new(lat2, lon2);
            prop_assert_eq!(geo_distance(p1, p2), geo_distance(p2, p1));
        }

        #[test]
        fn contains_is_corner_order_invariant(
            alat in 41.0f64..42.0, alon in 1.0f64..3.0,
            blat in 41.0f64..42.0, blon in 1.0f64..3.0,
            plat in 41.0f64..42.0, plon in 1.0f64..3.0,
        ) {
            let a = GeoPoint::new(alat, alon);
            let b = GeoPoint::new(blat, blon);
            let p = GeoPoint::new(plat, plon);
            prop_assert_eq!(
                GeoRectangle::new(a, b).contains(p),
                GeoRectangle::new(b, a).contains(p)
            );
        }
    }
}
