//! Everything static about the environment: geodesy, the road network, and
//! scenario loading.

pub mod geo;
pub mod route;
pub mod scenario;

pub use geo::{geo_distance, project, unproject, GeoPoint, GeoRectangle, PlanarPoint, Projection, EARTH_RADIUS_M};
pub use route::{Route, RouteLabel};
pub use scenario::{reference_scenario_doc, reference_scenario_json, Scenario, ScenarioDoc};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {axis} value {value} out of range")]
    InvalidCoordinate {
        field: String,
        value: f64,
        axis: &'static str,
    },
    #[error("point ({lat}, {lon}) is more than one degree from the projection center")]
    OutsideProjectionDomain { lat: f64, lon: f64 },
    #[error("{field}: {reason}")]
    BadField { field: String, reason: String },
    #[error("routes: list must not be empty")]
    EmptyRoutes,
    #[error("route {route_id}: polyline needs at least two points")]
    PolylineTooShort { route_id: String },
    #[error("routes: no route carries label {label}")]
    MissingLabel { label: RouteLabel },
    #[error("routes: label {label} assigned to both route {first} and route {second}")]
    DuplicateLabel {
        label: RouteLabel,
        first: String,
        second: String,
    },
    #[error("{field}: route {route_id} is not defined")]
    UnknownRoute { field: String, route_id: String },
    #[error("merge_zone: no explicit merge zone and no event rectangle to default to")]
    NoMergeZone,
    #[error("merge_zone: route {route_id} never intersects the merge zone")]
    MergeZoneDisjoint { route_id: String },
    #[error("route {route_id}: position {s} outside [0, {length_m}]")]
    RouteOverrun {
        route_id: String,
        s: f64,
        length_m: f64,
    },
}

impl WorldError {
    pub(crate) fn bad_field(field: &str, reason: impl Into<String>) -> Self {
        WorldError::BadField {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        WorldError::Json {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
