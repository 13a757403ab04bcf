//! Scenario file loading and validation.
//!
//! A scenario is a single JSON document describing the simulation window and
//! seed, the road network (two labeled routes converging on a merge zone),
//! the RSU sites, vehicle flows, the radio model, environment sensor events,
//! and the IP pools used for address labeling. Everything is validated
//! eagerly at load; the engine only ever sees a consistent scenario.

use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geo::{GeoPoint, GeoRectangle, Projection};
use super::route::{Route, RouteLabel};
use super::WorldError;
use crate::events::SensorEvent;
use crate::mobility::{FlowSpec, VehiclePrototype};
use crate::radio::RadioConfig;

/// Default mobility step when the scenario does not set one.
pub const DEFAULT_MOBILITY_STEP_S: f64 = 1.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationSection {
    pub start_time_s: f64,
    pub end_time_s: f64,
    pub random_seed: u64,
    pub center: GeoPoint,
    pub cartesian_offset: CartesianOffset,
    /// Mobility update period in seconds; 1.0 when omitted, down to 0.1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mobility_step_s: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CartesianOffset {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RouteSection {
    pub id: String,
    pub label: RouteLabel,
    /// Ordered [lat, lon] pairs.
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RsuSite {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

impl RsuSite {
    pub fn position(&self) -> GeoPoint {
        GeoPoint::new(self.lat, self.lon)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IpPools {
    pub net_mask: String,
    pub vehicle_net: String,
    pub rsu_net: String,
}

impl Default for IpPools {
    fn default() -> Self {
        Self {
            net_mask: "255.255.0.0".into(),
            vehicle_net: "10.1.0.0".into(),
            rsu_net: "10.2.0.0".into(),
        }
    }
}

/// The raw scenario document as serialized on disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub simulation: SimulationSection,
    pub routes: Vec<RouteSection>,
    pub rsus: Vec<RsuSite>,
    pub flows: Vec<FlowSpec>,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub events: Vec<SensorEvent>,
    #[serde(default)]
    pub ip_pools: IpPools,
    /// Explicit merge zone; defaults to the first event rectangle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_zone: Option<GeoRectangle>,
}

/// A fully validated scenario with the road network resolved.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub routes: Vec<Route>,
    pub merge_zone: GeoRectangle,
    pub projection: Projection,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let doc: ScenarioDoc = serde_json::from_str(text).map_err(WorldError::from_json)?;
        Self::from_doc(doc)
    }

    /// Validates every invariant eagerly; errors name the offending field.
    pub fn from_doc(doc: ScenarioDoc) -> Result<Self, WorldError> {
        let sim = &doc.simulation;
        if !sim.start_time_s.is_finite() || sim.start_time_s < 0.0 {
            return Err(WorldError::bad_field("simulation.start_time_s", "must be >= 0"));
        }
        if !sim.end_time_s.is_finite() || sim.end_time_s <= sim.start_time_s {
            return Err(WorldError::bad_field(
                "simulation.end_time_s",
                "must be greater than start_time_s",
            ));
        }
        sim.center.validate("simulation.center")?;
        if !sim.cartesian_offset.x.is_finite() || !sim.cartesian_offset.y.is_finite() {
            return Err(WorldError::bad_field("simulation.cartesian_offset", "must be finite"));
        }
        let step = sim.mobility_step_s.unwrap_or(DEFAULT_MOBILITY_STEP_S);
        if !(0.1..=1.0).contains(&step) {
            return Err(WorldError::bad_field(
                "simulation.mobility_step_s",
                "must be within [0.1, 1.0]",
            ));
        }

        if doc.routes.is_empty() {
            return Err(WorldError::EmptyRoutes);
        }
        let mut routes = Vec::with_capacity(doc.routes.len());
        let mut seen_a: Option<&str> = None;
        let mut seen_b: Option<&str> = None;
        for (i, r) in doc.routes.iter().enumerate() {
            let mut polyline = Vec::with_capacity(r.polyline.len());
            for (j, pair) in r.polyline.iter().enumerate() {
                let p = GeoPoint::new(pair[0], pair[1]);
                p.validate(&format!("routes[{i}].polyline[{j}]"))?;
                polyline.push(p);
            }
            let slot = match r.label {
                RouteLabel::A => &mut seen_a,
                RouteLabel::B => &mut seen_b,
            };
            if let Some(first) = slot {
                return Err(WorldError::DuplicateLabel {
                    label: r.label,
                    first: first.to_string(),
                    second: r.id.clone(),
                });
            }
            *slot = Some(&r.id);
            let route = Route::new(r.id.clone(), r.label, polyline)?;
            if route.length_m <= 0.0 {
                return Err(WorldError::bad_field(
                    &format!("routes[{i}].polyline"),
                    "total length must be positive",
                ));
            }
            routes.push(route);
        }
        if seen_a.is_none() {
            return Err(WorldError::MissingLabel { label: RouteLabel::A });
        }
        if seen_b.is_none() {
            return Err(WorldError::MissingLabel { label: RouteLabel::B });
        }

        for (i, rsu) in doc.rsus.iter().enumerate() {
            rsu.position().validate(&format!("rsus[{i}]"))?;
        }

        for (i, flow) in doc.flows.iter().enumerate() {
            if !routes.iter().any(|r| r.id == flow.route_id) {
                return Err(WorldError::UnknownRoute {
                    field: format!("flows[{i}].route_id"),
                    route_id: flow.route_id.clone(),
                });
            }
            if !flow.flow_veh_per_h.is_finite() || flow.flow_veh_per_h <= 0.0 {
                return Err(WorldError::bad_field(
                    &format!("flows[{i}].flow_veh_per_h"),
                    "must be positive",
                ));
            }
            if flow.max_vehicles == 0 {
                return Err(WorldError::bad_field(
                    &format!("flows[{i}].max_vehicles"),
                    "must be at least 1",
                ));
            }
            if !flow.starting_time_s.is_finite() || flow.starting_time_s < 0.0 {
                return Err(WorldError::bad_field(
                    &format!("flows[{i}].starting_time_s"),
                    "must be >= 0",
                ));
            }
            flow.prototype
                .validate(&format!("flows[{i}].prototype"))
                .map_err(|(path, reason)| WorldError::bad_field(&path, reason))?;
        }

        let radio = &doc.radio;
        if !radio.range_m.is_finite() || radio.range_m <= 0.0 {
            return Err(WorldError::bad_field("radio.range_m", "must be positive"));
        }
        if !radio.latency_s.is_finite() || radio.latency_s < 0.0 {
            return Err(WorldError::bad_field("radio.latency_s", "must be >= 0"));
        }
        if !radio.loss_prob.is_finite() || !(0.0..1.0).contains(&radio.loss_prob) {
            return Err(WorldError::bad_field("radio.loss_prob", "must be within [0, 1)"));
        }

        for (i, ev) in doc.events.iter().enumerate() {
            ev.rectangle.corner_a.validate(&format!("events[{i}].rectangle.a"))?;
            ev.rectangle.corner_b.validate(&format!("events[{i}].rectangle.b"))?;
            if ev.strength < 1 {
                return Err(WorldError::bad_field(&format!("events[{i}].strength"), "must be >= 1"));
            }
            if ev.start_s > ev.end_s {
                return Err(WorldError::bad_field(
                    &format!("events[{i}].start_s"),
                    "must not exceed end_s",
                ));
            }
        }

        for (field, addr) in [
            ("ip_pools.net_mask", &doc.ip_pools.net_mask),
            ("ip_pools.vehicle_net", &doc.ip_pools.vehicle_net),
            ("ip_pools.rsu_net", &doc.ip_pools.rsu_net),
        ] {
            addr.parse::<Ipv4Addr>()
                .map_err(|_| WorldError::bad_field(field, "must be a dotted-quad IPv4 address"))?;
        }

        let merge_zone = doc
            .merge_zone
            .or_else(|| doc.events.first().map(|e| e.rectangle))
            .ok_or(WorldError::NoMergeZone)?;
        for route in &routes {
            let intersects = route
                .polyline
                .windows(2)
                .any(|seg| merge_zone.intersects_segment(seg[0], seg[1]));
            if !intersects {
                return Err(WorldError::MergeZoneDisjoint {
                    route_id: route.id.clone(),
                });
            }
        }

        let projection = Projection::new(
            sim.center,
            doc.simulation.cartesian_offset.x,
            doc.simulation.cartesian_offset.y,
        );
        Ok(Self {
            doc,
            routes,
            merge_zone,
            projection,
        })
    }

    /// Canonical pretty-printed JSON of the document, newline-terminated.
    /// Identical inputs reserialize identically, which makes run hashes and
    /// golden comparisons stable.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.doc).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn seed(&self) -> u64 {
        self.doc.simulation.random_seed
    }

    pub fn start_s(&self) -> f64 {
        self.doc.simulation.start_time_s
    }

    pub fn end_s(&self) -> f64 {
        self.doc.simulation.end_time_s
    }

    pub fn mobility_step_s(&self) -> f64 {
        self.doc.simulation.mobility_step_s.unwrap_or(DEFAULT_MOBILITY_STEP_S)
    }

    pub fn route_by_id(&self, id: &str) -> Option<&Route> {
        self.routes.iter().find(|r| r.id == id)
    }

    pub fn route_index(&self, id: &str) -> Option<usize> {
        self.routes.iter().position(|r| r.id == id)
    }
}

/// The bundled reference scenario: two routes converging on the Castelldefels
/// roundabout with an RSU at the junction, the hazard-zone speed event over
/// the roundabout, and the reference flows and vehicle prototype.
pub fn reference_scenario_doc() -> ScenarioDoc {
    let prototype = VehiclePrototype {
        accel: 2.6,
        decel: 4.5,
        length: 5.0,
        max_speed: 20.0,
        min_gap: 2.5,
        sigma: 0.5,
        tau: 1.0,
    };
    ScenarioDoc {
        simulation: SimulationSection {
            start_time_s: 0.0,
            end_time_s: 1200.0,
            random_seed: 268965854,
            center: GeoPoint::new(41.16, 1.58),
            cartesian_offset: CartesianOffset {
                x: -411320.95,
                y: -4568671.76,
            },
            mobility_step_s: None,
        },
        routes: vec![
            RouteSection {
                id: "1".into(),
                label: RouteLabel::A,
                polyline: vec![
                    [41.28560, 1.96950],
                    [41.28060, 1.97440],
                    [41.28000, 1.97550],
                    [41.27850, 1.97820],
                    [41.27600, 1.98300],
                ],
            },
            RouteSection {
                id: "2".into(),
                label: RouteLabel::B,
                polyline: vec![
                    [41.28420, 1.97890],
                    [41.28090, 1.97640],
                    [41.28000, 1.97550],
                    [41.27850, 1.97820],
                    [41.27600, 1.98300],
                ],
            },
        ],
        rsus: vec![RsuSite {
            id: "rsu".into(),
            lat: 41.28039945484303,
            lon: 1.975863217521691,
        }],
        flows: vec![
            FlowSpec {
                route_id: "1".into(),
                starting_time_s: 5.0,
                flow_veh_per_h: 500.0,
                max_vehicles: 100,
                prototype: prototype.clone(),
            },
            FlowSpec {
                route_id: "2".into(),
                starting_time_s: 5.0,
                flow_veh_per_h: 120.0,
                max_vehicles: 20,
                prototype,
            },
        ],
        radio: RadioConfig::default(),
        events: vec![SensorEvent {
            kind: crate::events::SensorType::Speed,
            rectangle: GeoRectangle::new(
                GeoPoint::new(41.28105, 1.97384),
                GeoPoint::new(41.27961, 1.97701),
            ),
            strength: 1,
            start_s: 0.0,
            end_s: 1220.0,
        }],
        ip_pools: IpPools::default(),
        merge_zone: None,
    }
}

/// Reference scenario as canonical JSON, ready to write to disk.
pub fn reference_scenario_json() -> String {
    Scenario::from_doc(reference_scenario_doc())
        .expect("reference scenario validates")
        .to_canonical_json()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scenario_validates_with_paper_constants() {
        let scenario = Scenario::from_doc(reference_scenario_doc()).unwrap();
        assert_eq!(scenario.seed(), 268965854);
        assert_eq!(scenario.end_s(), 1200.0);
        assert_eq!(scenario.start_s(), 0.0);
        assert_eq!(scenario.doc.flows[0].max_vehicles, 100);
        assert_eq!(scenario.doc.flows[1].max_vehicles, 20);
        assert_eq!(scenario.doc.events[0].end_s, 1220.0);
        // merge zone defaults to the event rectangle
        assert_eq!(scenario.merge_zone, scenario.doc.events[0].rectangle);
    }

    #[test]
    fn reference_round_trips_through_json() {
        let json = reference_scenario_json();
        let scenario = Scenario::from_json(&json).unwrap();
        assert_eq!(scenario.to_canonical_json(), json);
    }

    #[test]
    fn duplicate_label_names_both_routes() {
        let mut doc = reference_scenario_doc();
        doc.routes[1].label = RouteLabel::A;
        let err = Scenario::from_doc(doc).unwrap_err();
        match err {
            WorldError::DuplicateLabel { label, first, second } => {
                assert_eq!(label, RouteLabel::A);
                assert_eq!(first, "1");
                assert_eq!(second, "2");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_routes_rejected() {
        let mut doc = reference_scenario_doc();
        doc.routes.clear();
        assert!(matches!(Scenario::from_doc(doc), Err(WorldError::EmptyRoutes)));
    }

    #[test]
    fn missing_label_b_rejected() {
        let mut doc = reference_scenario_doc();
        doc.routes.truncate(1);
        doc.flows.truncate(1);
        assert!(matches!(
            Scenario::from_doc(doc),
            Err(WorldError::MissingLabel { label: RouteLabel::B })
        ));
    }

    #[test]
    fn disjoint_merge_zone_rejected() {
        let mut doc = reference_scenario_doc();
        doc.merge_zone = Some(GeoRectangle::new(
            GeoPoint::new(41.30, 1.95),
            GeoPoint::new(41.31, 1.96),
        ));
        let err = Scenario::from_doc(doc).unwrap_err();
        assert!(matches!(err, WorldError::MergeZoneDisjoint { .. }));
    }

    #[test]
    fn flow_with_unknown_route_names_field() {
        let mut doc = reference_scenario_doc();
        doc.flows[0].route_id = "99".into();
        let err = Scenario::from_doc(doc).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("flows[0].route_id"), "{msg}");
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = Scenario::from_json("{ \"simulation\": ").unwrap_err();
        match err {
            WorldError::Json { line, column, .. } => {
                assert!(line >= 1);
                assert!(column >= 1);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_coordinate_names_field_path() {
        let mut doc = reference_scenario_doc();
        doc.routes[0].polyline[2] = [95.0, 1.9];
        let err = Scenario::from_doc(doc).unwrap_err();
        assert!(err.to_string().contains("routes[0].polyline[2]"));
    }
}
