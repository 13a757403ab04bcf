//! Environment event server: time-windowed geo-rectangle sensor events that
//! vehicles poll each mobility tick. This is the fallback channel that slows
//! traffic through the hazard zone independently of the RSU exchange.

use serde::{Deserialize, Serialize};

use crate::engine::time::SimTime;
use crate::world::{GeoPoint, GeoRectangle};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensorType {
    Speed,
    Direction,
    Other,
}

impl std::fmt::Display for SensorType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SensorType::Speed => write!(f, "Speed"),
            SensorType::Direction => write!(f, "Direction"),
            SensorType::Other => write!(f, "Other"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorEvent {
    #[serde(rename = "type")]
    pub kind: SensorType,
    pub rectangle: GeoRectangle,
    pub strength: u32,
    pub start_s: f64,
    pub end_s: f64,
}

impl SensorEvent {
    fn active_at(&self, now: SimTime) -> bool {
        let start = SimTime::from_secs_f64(self.start_s);
        let end = SimTime::from_secs_f64(self.end_s);
        start <= now && now <= end
    }
}

/// First matching event in declaration order, or strength 0 when nothing
/// covers the position at this time.
pub fn sensor_state(events: &[SensorEvent], pos: GeoPoint, now: SimTime) -> (SensorType, u32) {
    for ev in events {
        if ev.active_at(now) && ev.rectangle.contains(pos) {
            return (ev.kind, ev.strength);
        }
    }
    (SensorType::Other, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn castelldefels_event() -> SensorEvent {
        SensorEvent {
            kind: SensorType::Speed,
            rectangle: GeoRectangle::new(
                GeoPoint::new(41.28105, 1.97384),
                GeoPoint::new(41.27961, 1.97701),
            ),
            strength: 1,
            start_s: 0.0,
            end_s: 1220.0,
        }
    }

    #[test]
    fn inside_rectangle_during_window() {
        let ev = vec![castelldefels_event()];
        let rsu = GeoPoint::new(41.28039945484303, 1.975863217521691);
        assert_eq!(sensor_state(&ev, rsu, SimTime::from_secs(100)), (SensorType::Speed, 1));
    }

    #[test]
    fn window_end_is_inclusive() {
        let ev = vec![castelldefels_event()];
        let rsu = GeoPoint::new(41.28039945484303, 1.975863217521691);
        assert_eq!(sensor_state(&ev, rsu, SimTime::from_secs(1220)).1, 1);
        assert_eq!(sensor_state(&ev, rsu, SimTime::from_secs(1221)).1, 0);
    }

    #[test]
    fn outside_rectangle_is_silent() {
        let ev = vec![castelldefels_event()];
        let far = GeoPoint::new(41.29, 1.975);
        assert_eq!(sensor_state(&ev, far, SimTime::from_secs(100)).1, 0);
    }

    #[test]
    fn declaration_order_resolves_overlaps() {
        let mut second = castelldefels_event();
        second.kind = SensorType::Direction;
        second.strength = 2;
        let ev = vec![castelldefels_event(), second];
        let rsu = GeoPoint::new(41.28039945484303, 1.975863217521691);
        assert_eq!(sensor_state(&ev, rsu, SimTime::from_secs(10)), (SensorType::Speed, 1));
    }
}
