//! The three application behaviors: RSU merge arbitration, the vehicle merge
//! assist (beaconing, control handling, sensor reaction), and the companion
//! slow-down ramp.
//!
//! Applications are deterministic state machines. They never touch the radio
//! or the clock themselves; the engine delivers inputs and carries out the
//! returned messages, speed commands, and log lines.

use std::collections::BTreeMap;

use crate::engine::time::SimTime;
use crate::engine::trace::LogLevel;
use crate::engine::EntityId;
use crate::events::SensorType;
use crate::mobility::{CommandKind, CommandSource, SpeedCommand};
use crate::world::{GeoPoint, RouteLabel};

/// Beacon period for vehicles and RSU sampling alike.
pub const BEACON_INTERVAL_NS: u64 = 2_000_000_000;
/// How long a received beacon remains evidence of a nearby vehicle.
pub const BEACON_TTL_NS: u64 = 5_000_000_000;
/// Ramp interval of the sensor slow-down command (the literal 80 of
/// `slowDown(newSpeed, 80)`, taken as milliseconds).
pub const SLOW_DOWN_INTERVAL_NS: u64 = 80_000_000;
/// Target of the companion slow-down ramp, 25 km/h in m/s.
#[allow(clippy::excessive_precision)]
pub const FALLBACK_RAMP_TARGET_MPS: f64 = 6.9444444444444445;
/// Interval of the companion slow-down ramp (5000 ms).
pub const FALLBACK_RAMP_INTERVAL_NS: u64 = 5_000_000_000;

pub type LogLine = (LogLevel, String);

/// The V2X beacon payload every vehicle broadcasts while driving.
#[derive(Clone, Debug, PartialEq)]
pub struct BeaconMessage {
    pub vehicle: EntityId,
    pub position: GeoPoint,
    pub route_label: RouteLabel,
    pub speed: f64,
    pub sent_at: SimTime,
}

/// A beacon held in the RSU queue until its TTL lapses.
#[derive(Clone, Debug, PartialEq)]
pub struct QueuedBeacon {
    pub beacon: BeaconMessage,
    pub received_at: SimTime,
    pub expires_at: SimTime,
}

/// Drive/Stop decision with the wire encoding Drive = 1, Stop = 0.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Decision {
    Stop = 0,
    Drive = 1,
}

impl Decision {
    pub fn code(self) -> u8 {
        match self {
            Decision::Stop => 0,
            Decision::Drive => 1,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ControlReason {
    MergePriority,
    Fallback,
}

/// Control message from the RSU to one vehicle. Delivery is broadcast single
/// hop like all radio traffic; receivers filter on `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlMessage {
    pub issuer: EntityId,
    pub target: EntityId,
    pub decision: Decision,
    pub reason: ControlReason,
    pub sent_at: SimTime,
}

/// State of the merge-arbitration application on one RSU.
#[derive(Clone, Debug)]
pub struct RsuApp {
    pub id: EntityId,
    pub position: GeoPoint,
    /// Live beacons from priority-route (B) vehicles only.
    queue: Vec<QueuedBeacon>,
    last_decision: BTreeMap<EntityId, Decision>,
    pub beacon_ttl_ns: u64,
    pub sample_interval_ns: u64,
}

impl RsuApp {
    pub fn new(id: EntityId, position: GeoPoint) -> Self {
        Self {
            id,
            position,
            queue: Vec::new(),
            last_decision: BTreeMap::new(),
            beacon_ttl_ns: BEACON_TTL_NS,
            sample_interval_ns: BEACON_INTERVAL_NS,
        }
    }

    /// Drops queue entries whose TTL has lapsed. An entry received at t is
    /// live for queries in [t, t + TTL) and never at t + TTL or later.
    fn purge(&mut self, now: SimTime) {
        self.queue.retain(|q| now < q.expires_at);
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// The merge decision for a vehicle on `label`, assuming the queue has
    /// already been purged: B always drives, A drives iff no live B beacon.
    pub fn arbitrate(&self, label: RouteLabel) -> Decision {
        match label {
            RouteLabel::B => Decision::Drive,
            RouteLabel::A => {
                if self.queue.is_empty() {
                    Decision::Drive
                } else {
                    Decision::Stop
                }
            }
        }
    }

    /// Handles a delivered beacon: purge, enqueue priority beacons (newest
    /// per vehicle wins), arbitrate, and answer with a control message
    /// addressed to the sender.
    pub fn on_beacon(&mut self, b: &BeaconMessage, now: SimTime) -> (ControlMessage, Vec<LogLine>) {
        self.purge(now);
        let logs = vec![
            (LogLevel::Info, format!("Received message from {}", b.vehicle)),
            (
                LogLevel::Info,
                format!(
                    "Vehicle position confirmed as: InterVehicleMsg{{senderPosition={}}}",
                    b.position
                ),
            ),
        ];
        if b.route_label == RouteLabel::B {
            self.queue.retain(|q| q.beacon.vehicle != b.vehicle);
            self.queue.push(QueuedBeacon {
                beacon: b.clone(),
                received_at: now,
                expires_at: now.plus_ns(self.beacon_ttl_ns),
            });
        }
        let decision = self.arbitrate(b.route_label);
        self.last_decision.insert(b.vehicle, decision);
        let control = ControlMessage {
            issuer: self.id,
            target: b.vehicle,
            decision,
            reason: ControlReason::MergePriority,
            sent_at: now,
        };
        (control, logs)
    }

    /// Periodic sample: purge, and once the queue has drained re-issue Drive
    /// to every vehicle previously told to stop, in entity order.
    pub fn tick(&mut self, now: SimTime) -> Vec<ControlMessage> {
        self.purge(now);
        if !self.queue.is_empty() {
            return Vec::new();
        }
        let stopped: Vec<EntityId> = self
            .last_decision
            .iter()
            .filter(|(_, d)| **d == Decision::Stop)
            .map(|(id, _)| *id)
            .collect();
        stopped
            .into_iter()
            .map(|veh| {
                self.last_decision.insert(veh, Decision::Drive);
                ControlMessage {
                    issuer: self.id,
                    target: veh,
                    decision: Decision::Drive,
                    reason: ControlReason::MergePriority,
                    sent_at: now,
                }
            })
            .collect()
    }
}

/// Speed a vehicle falls back to when a sensor event of the given type fires.
pub fn new_speed(kind: SensorType) -> f64 {
    match kind {
        SensorType::Speed => 2.0,
        SensorType::Direction => 8.0,
        SensorType::Other => 10.0,
    }
}

/// Vehicle-side position context for a sensor evaluation.
#[derive(Copy, Clone, Debug)]
pub struct SenseContext<'a> {
    pub position: GeoPoint,
    pub route_id: &'a str,
}

/// Merge-assist application state on one vehicle: reacts to RSU controls and
/// to environment sensor readings, with a hazard latch so one zone crossing
/// triggers exactly one slow-down / reset pair.
#[derive(Clone, Debug, Default)]
pub struct MergeAssistApp {
    in_hazard: bool,
}

impl MergeAssistApp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Log lines for application start-up.
    pub fn setup_logs(&self) -> Vec<LogLine> {
        vec![
            (LogLevel::Info, "Initialize application".to_string()),
            (LogLevel::Info, "Activated 802.11p AdHoc WiFi Module".to_string()),
        ]
    }

    /// Handles a control message addressed to this vehicle: Stop becomes a
    /// stopping ceiling, Drive releases the RSU ceiling.
    pub fn on_control(&mut self, c: &ControlMessage, now: SimTime) -> (Vec<SpeedCommand>, Vec<LogLine>) {
        let logs = vec![
            (
                LogLevel::Info,
                "Control message received from Roadside Unit".to_string(),
            ),
            (LogLevel::Info, "Processing control message".to_string()),
        ];
        let cmd = match c.decision {
            Decision::Stop => SpeedCommand {
                kind: CommandKind::Stop,
                target_speed: 0.0,
                interval_ns: 0,
                issued_at: now,
                source: CommandSource::RsuControl,
            },
            Decision::Drive => SpeedCommand {
                kind: CommandKind::ResetSpeed,
                target_speed: 0.0,
                interval_ns: 0,
                issued_at: now,
                source: CommandSource::RsuControl,
            },
        };
        (vec![cmd], logs)
    }

    /// Evaluates the environment sensor reading for this tick. On entering a
    /// sensed area the merge assist slows to the type-specific speed and the
    /// companion app additionally ramps toward 25 km/h; the minimum-ceiling
    /// rule resolves the overlap. Leaving the area resets both.
    pub fn sense(
        &mut self,
        road: Option<SenseContext<'_>>,
        kind: SensorType,
        strength: u32,
        now: SimTime,
    ) -> (Vec<SpeedCommand>, Vec<LogLine>) {
        let Some(ctx) = road else {
            return (
                Vec::new(),
                vec![(
                    LogLevel::Warn,
                    "No road position given, skip this event".to_string(),
                )],
            );
        };
        if strength > 0 {
            let target = new_speed(kind);
            let logs = vec![
                (
                    LogLevel::Info,
                    format!("Sensored {kind} event detected, reducing speed to {target:.1} m/s"),
                ),
                (LogLevel::Info, format!("Position: {}", ctx.position)),
                (LogLevel::Info, format!("Event strength to: {strength}")),
                (LogLevel::Info, format!("SensorType to: {kind}")),
                (LogLevel::Info, format!("CurrVehicle: route: {}", ctx.route_id)),
            ];
            let cmds = if self.in_hazard {
                Vec::new()
            } else {
                self.in_hazard = true;
                vec![
                    SpeedCommand {
                        kind: CommandKind::SlowDown,
                        target_speed: target,
                        interval_ns: SLOW_DOWN_INTERVAL_NS,
                        issued_at: now,
                        source: CommandSource::SensorReaction,
                    },
                    SpeedCommand {
                        kind: CommandKind::ChangeSpeedWithInterval,
                        target_speed: FALLBACK_RAMP_TARGET_MPS,
                        interval_ns: FALLBACK_RAMP_INTERVAL_NS,
                        issued_at: now,
                        source: CommandSource::SlowDownApp,
                    },
                ]
            };
            (cmds, logs)
        } else if self.in_hazard {
            self.in_hazard = false;
            let cmds = vec![
                SpeedCommand {
                    kind: CommandKind::ResetSpeed,
                    target_speed: 0.0,
                    interval_ns: 0,
                    issued_at: now,
                    source: CommandSource::SensorReaction,
                },
                SpeedCommand {
                    kind: CommandKind::ResetSpeed,
                    target_speed: 0.0,
                    interval_ns: 0,
                    issued_at: now,
                    source: CommandSource::SlowDownApp,
                },
            ];
            (cmds, Vec::new())
        } else {
            (Vec::new(), Vec::new())
        }
    }
}
