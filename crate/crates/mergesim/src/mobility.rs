//! Vehicle spawning and longitudinal car-following dynamics.
//!
//! The dynamics are a simplified Krauss update: each step the vehicle picks
//! the least of (accelerated speed, collision-free safe speed, its prototype
//! maximum, the active command ceiling), then loses a random "driver
//! imperfection" fraction of one acceleration step. Speed commands from the
//! applications act as ceilings over the desired speed, never forced values,
//! so a slower leader still dominates.

use serde::{Deserialize, Serialize};

use crate::engine::time::{SimTime, NANOS_PER_SEC};
use crate::engine::EntityId;
use crate::world::RouteLabel;

/// Per-vehicle dynamics parameters, mirroring the scenario prototype section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehiclePrototype {
    pub accel: f64,
    pub decel: f64,
    pub length: f64,
    pub max_speed: f64,
    pub min_gap: f64,
    pub sigma: f64,
    pub tau: f64,
}

impl VehiclePrototype {
    pub(crate) fn validate(&self, path: &str) -> Result<(), (String, String)> {
        let positive = [
            ("accel", self.accel),
            ("decel", self.decel),
            ("length", self.length),
            ("max_speed", self.max_speed),
            ("min_gap", self.min_gap),
            ("tau", self.tau),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err((format!("{path}.{name}"), "must be positive".into()));
            }
        }
        if !self.sigma.is_finite() || !(0.0..=1.0).contains(&self.sigma) {
            return Err((format!("{path}.sigma"), "must be within [0, 1]".into()));
        }
        Ok(())
    }
}

/// One flow definition: vehicles of one prototype entering one route at a
/// uniform rate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowSpec {
    pub route_id: String,
    pub starting_time_s: f64,
    pub flow_veh_per_h: f64,
    pub max_vehicles: u32,
    pub prototype: VehiclePrototype,
}

/// Deterministic spawn instants for a flow: uniform headways of 3600/flow
/// seconds starting at `starting_time_s`, capped by `max_vehicles` and the
/// scenario end. Entry-occupancy deferral is the engine's concern; these are
/// the planned times.
pub fn spawn_schedule(flow: &FlowSpec, end: SimTime) -> Vec<SimTime> {
    let headway_ns = (3600.0 / flow.flow_veh_per_h * NANOS_PER_SEC as f64).round() as u64;
    let start = SimTime::from_secs_f64(flow.starting_time_s);
    let mut times = Vec::new();
    for k in 0..flow.max_vehicles as u64 {
        let t = start.plus_ns(k * headway_ns);
        if t > end {
            break;
        }
        times.push(t);
    }
    times
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandKind {
    SlowDown,
    ChangeSpeedWithInterval,
    Stop,
    ResetSpeed,
}

/// Who issued a command. Ceilings are tracked per source so that a Drive from
/// the RSU releases only the RSU's Stop while the hazard-zone ceiling stays,
/// and vice versa; the effective limit is the minimum across live sources.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum CommandSource {
    RsuControl = 0,
    SensorReaction = 1,
    SlowDownApp = 2,
}

const COMMAND_SOURCES: usize = 3;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SpeedCommand {
    pub kind: CommandKind,
    pub target_speed: f64,
    pub interval_ns: u64,
    pub issued_at: SimTime,
    pub source: CommandSource,
}

/// A ceiling ramping linearly from the speed at issue time down (or up) to
/// the target over the ramp duration, holding the target afterwards.
#[derive(Copy, Clone, Debug, PartialEq)]
struct Ceiling {
    from_speed: f64,
    target: f64,
    start: SimTime,
    ramp_ns: u64,
}

impl Ceiling {
    fn at(&self, t: SimTime) -> f64 {
        if t <= self.start || self.ramp_ns == 0 {
            if t <= self.start {
                return self.from_speed;
            }
            return self.target;
        }
        let elapsed = t.since(self.start);
        if elapsed >= self.ramp_ns {
            self.target
        } else {
            let frac = elapsed as f64 / self.ramp_ns as f64;
            self.from_speed + (self.target - self.from_speed) * frac
        }
    }
}

/// The set of active per-source ceilings on one vehicle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommandSet {
    slots: [Option<Ceiling>; COMMAND_SOURCES],
}

impl CommandSet {
    /// Minimum ceiling across active sources, `None` when unrestricted.
    pub fn ceiling_at(&self, t: SimTime) -> Option<f64> {
        self.slots
            .iter()
            .flatten()
            .map(|c| c.at(t))
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
    }

    pub fn is_restricted(&self) -> bool {
        self.slots.iter().any(Option::is_some)
    }
}

/// Kinematic state plus prototype of one vehicle.
#[derive(Clone, Debug)]
pub struct VehicleState {
    pub id: EntityId,
    pub route_id: String,
    pub label: RouteLabel,
    /// Arc-length position along the route, meters.
    pub s: f64,
    pub speed: f64,
    pub prototype: VehiclePrototype,
    pub commands: CommandSet,
    pub spawned_at: SimTime,
}

/// Applies a speed command to the vehicle's ceiling set.
///
/// SlowDown and ChangeSpeedWithInterval ramp from the current speed to the
/// target over the command interval; Stop ramps to zero over the stopping
/// time implied by the prototype decel; ResetSpeed clears the issuing
/// source's ceiling.
pub fn apply_command(v: &mut VehicleState, cmd: &SpeedCommand) {
    let slot = &mut v.commands.slots[cmd.source as usize];
    match cmd.kind {
        CommandKind::SlowDown | CommandKind::ChangeSpeedWithInterval => {
            *slot = Some(Ceiling {
                from_speed: v.speed,
                target: cmd.target_speed.max(0.0),
                start: cmd.issued_at,
                ramp_ns: cmd.interval_ns,
            });
        }
        CommandKind::Stop => {
            let ramp_s = v.speed / v.prototype.decel;
            *slot = Some(Ceiling {
                from_speed: v.speed,
                target: 0.0,
                start: cmd.issued_at,
                ramp_ns: (ramp_s * NANOS_PER_SEC as f64).round() as u64,
            });
        }
        CommandKind::ResetSpeed => {
            *slot = None;
        }
    }
}

/// Snapshot of the nearest vehicle ahead on the same route.
#[derive(Copy, Clone, Debug)]
pub struct LeaderView {
    pub s: f64,
    pub speed: f64,
    pub length: f64,
}

#[derive(Copy, Clone, Debug)]
pub struct StepOutcome {
    pub speed: f64,
    pub s: f64,
    /// Gap to the leader was negative at step time.
    pub collision: bool,
}

/// One Krauss step over `dt_s`, with the command ceiling evaluated at the end
/// of the step. `noise` supplies one uniform [0,1) draw per call.
pub fn step(
    v: &VehicleState,
    leader: Option<&LeaderView>,
    dt_s: f64,
    step_end: SimTime,
    noise: &mut impl FnMut() -> f64,
) -> StepOutcome {
    let p = &v.prototype;
    let mut collision = false;
    let v_safe = match leader {
        Some(l) => {
            let gap = l.s - l.length - v.s;
            if gap < 0.0 {
                collision = true;
            }
            let headroom = (gap - p.min_gap).max(0.0);
            let bt = p.decel * p.tau;
            (-bt + (bt * bt + l.speed * l.speed + 2.0 * p.decel * headroom).sqrt()).max(0.0)
        }
        None => f64::INFINITY,
    };
    let ceiling = v.commands.ceiling_at(step_end).unwrap_or(f64::INFINITY);
    let v_des = (v.speed + p.accel * dt_s)
        .min(v_safe)
        .min(p.max_speed)
        .min(ceiling);
    let xi = noise();
    let speed = (v_des - p.sigma * p.accel * xi * dt_s).max(0.0);
    StepOutcome {
        speed,
        s: v.s + speed * dt_s,
        collision,
    }
}
