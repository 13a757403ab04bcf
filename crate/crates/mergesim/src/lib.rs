//! Deterministic discrete-event simulator of a V2X cooperative merge: two
//! vehicle flows converge on a roundabout, every vehicle broadcasts beacons
//! over a unit-disc ad-hoc radio, a roadside unit arbitrates the merge with
//! Drive/Stop control messages, and a geo-fenced sensor event slows traffic
//! through the hazard zone as a fallback. A trace analyzer scores the runs
//! against the 3GPP Release 14 use-case requirements.
//!
//! Identical scenario and seed produce byte-identical logs and traces.

pub mod apps;
pub mod engine;
pub mod events;
pub mod kpi;
pub mod mobility;
pub mod radio;
pub mod world;

pub use engine::{run, EntityId, EntityKind, SimTime, SimulationReport};
pub use world::{Scenario, WorldError};
