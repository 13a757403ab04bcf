//! Deterministic discrete-event engine: the simulation clock, the event
//! queue, the entity registry with address assignment, and the run loop that
//! wires mobility, radio, applications, and environment events together.
//!
//! Determinism contract: identical scenario plus seed gives byte-identical
//! logs and traces. Everything that iterates does so over ordered
//! collections, randomness comes from named seeded streams, and tie-breaking
//! between events at one instant is by scheduling order.

pub mod rng;
pub mod time;
pub mod trace;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::apps::{self, BeaconMessage, ControlMessage, MergeAssistApp, RsuApp};
use crate::events::sensor_state;
use crate::mobility::{self, LeaderView, StepOutcome, VehicleState};
use crate::radio::{self, MessagePayload, V2XEnvelope};
use crate::world::scenario::IpPools;
use crate::world::{GeoPoint, Scenario, WorldError};

pub use rng::{RngRegistry, RngStream};
pub use time::SimTime;
pub use trace::{LogLevel, LogSink, TraceWriters};

const RSU_APP_NAME: &str = "CastelldefelsRSU";
const MERGE_ASSIST_APP_NAME: &str = "NetworkMergeAssist";
/// DENM geocast radius carried in vehicle beacons for format fidelity.
const BEACON_GEOCAST_RADIUS_M: f64 = 3000.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("event scheduled into the past: fire_at {fire_at} < clock {now}")]
    ScheduleInPast { fire_at: SimTime, now: SimTime },
    #[error("{pool} pool exhausted at index {index}")]
    PoolExhausted { pool: &'static str, index: u32 },
}

impl EngineError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        EngineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Vehicle,
    Rsu,
}

/// Identity of a simulated node, rendered as `veh_<n>` or `rsu_<n>`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId {
    pub kind: EntityKind,
    pub index: u32,
}

impl EntityId {
    pub fn new(kind: EntityKind, index: u32) -> Self {
        Self { kind, index }
    }
}

impl std::fmt::Display for EntityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            EntityKind::Vehicle => write!(f, "veh_{}", self.index),
            EntityKind::Rsu => write!(f, "rsu_{}", self.index),
        }
    }
}

/// A dotted-quad address label from one of the scenario pools.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct NetAddress(pub Ipv4Addr);

impl std::fmt::Display for NetAddress {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Allocates the address for an entity: entity n takes host number n+1 in its
/// kind's pool, where the final octet runs 1..=254 and carries into the third
/// octet (so veh_0 is 10.1.0.1 and veh_254 is 10.1.1.1 under the defaults).
pub fn assign_address(id: EntityId, pools: &IpPools) -> Result<NetAddress, EngineError> {
    let (pool_name, net): (&'static str, &str) = match id.kind {
        EntityKind::Vehicle => ("vehicle", &pools.vehicle_net),
        EntityKind::Rsu => ("rsu", &pools.rsu_net),
    };
    let base: Ipv4Addr = net.parse().map_err(|_| EngineError::PoolExhausted {
        pool: pool_name,
        index: id.index,
    })?;
    let octets = base.octets();
    let third = octets[2] as u32 + id.index / 254;
    let fourth = id.index % 254 + 1;
    if third > 255 {
        return Err(EngineError::PoolExhausted {
            pool: pool_name,
            index: id.index,
        });
    }
    Ok(NetAddress(Ipv4Addr::new(
        octets[0],
        octets[1],
        third as u8,
        fourth as u8,
    )))
}

/// Event payloads the engine dispatches.
#[derive(Clone, Debug)]
pub enum EventPayload {
    /// Periodic global mobility step.
    MobilityTick,
    /// Planned vehicle entry on a flow.
    Spawn { vehicle: EntityId, flow_idx: usize },
    /// Vehicle beacon timer.
    BeaconTimer { vehicle: EntityId },
    /// RSU periodic sample timer.
    RsuTick { rsu: EntityId },
    /// Radio delivery of a broadcast to one receiver.
    Deliver {
        receiver: EntityId,
        envelope: V2XEnvelope,
    },
}

/// A scheduled event. Dispatch order is (fire_at, seq) lexicographic, fully
/// deterministic.
#[derive(Clone, Debug)]
pub struct SimEvent {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: EventPayload,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

/// Min-ordered deterministic event queue.
pub struct EventQueue {
    heap: BinaryHeap<std::cmp::Reverse<SimEvent>>,
    next_seq: u64,
    pub scheduled: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
            scheduled: 0,
        }
    }

    /// Enqueues `payload` at `fire_at`. Scheduling into the past is a logic
    /// bug and a hard error.
    pub fn schedule(
        &mut self,
        now: SimTime,
        fire_at: SimTime,
        payload: EventPayload,
    ) -> Result<(), EngineError> {
        if fire_at < now {
            return Err(EngineError::ScheduleInPast { fire_at, now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.scheduled += 1;
        self.heap.push(std::cmp::Reverse(SimEvent {
            fire_at,
            seq,
            payload,
        }));
        Ok(())
    }

    pub fn next_fire_at(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.0.fire_at)
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

impl Default for EventQueue {
    fn default() -> Self {
        Self::new()
    }
}

struct VehicleEntity {
    state: VehicleState,
    position: GeoPoint,
    app: MergeAssistApp,
    route_idx: usize,
    #[allow(dead_code)]
    addr: NetAddress,
}

struct RsuEntity {
    app: RsuApp,
    spawned_at: SimTime,
    #[allow(dead_code)]
    addr: NetAddress,
}

enum Entity {
    Vehicle(VehicleEntity),
    Rsu(RsuEntity),
}

impl Entity {
    fn position(&self) -> GeoPoint {
        match self {
            Entity::Vehicle(v) => v.position,
            Entity::Rsu(r) => r.app.position,
        }
    }

    fn spawned_at(&self) -> SimTime {
        match self {
            Entity::Vehicle(v) => v.state.spawned_at,
            Entity::Rsu(r) => r.spawned_at,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RouteSpawns {
    pub route_id: String,
    pub label: crate::world::RouteLabel,
    pub spawned: u32,
}

/// Counters and artifact paths of one completed run.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationReport {
    pub run_id: String,
    pub scenario_sha256: String,
    pub random_seed: u64,
    pub end_time_ns: u64,
    pub vehicles_spawned: u32,
    pub spawned_by_route: Vec<RouteSpawns>,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
    pub events_scheduled: u64,
    pub events_dispatched: u64,
    pub events_cancelled: u64,
    pub events_remaining: u64,
    pub collision_faults: u64,
    /// Absolute artifact locations; the manifest records them relative to
    /// the run directory so identical runs stay byte-identical anywhere.
    #[serde(skip)]
    pub out_dir: String,
    #[serde(skip)]
    pub log_dir: String,
    #[serde(skip)]
    pub position_trace: String,
    #[serde(skip)]
    pub message_trace: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    #[serde(flatten)]
    report: &'a SimulationReport,
    scenario_file: &'a str,
    logs_dir: String,
    position_trace: &'a str,
    message_trace: &'a str,
}

#[derive(Default)]
struct Counters {
    dispatched: u64,
    cancelled: u64,
    sent: u64,
    delivered: u64,
    dropped: u64,
    collisions: u64,
}

enum Disposition {
    Handled,
    /// Target entity no longer exists; the event is counted as cancelled.
    Cancelled,
}

/// Runs a validated scenario, writing logs, traces, a scenario copy, and a
/// manifest under `out_dir`.
pub fn run(scenario: &Scenario, out_dir: &Path) -> Result<SimulationReport, EngineError> {
    let canonical = scenario.to_canonical_json();
    let scenario_sha256 = hex_digest(canonical.as_bytes());
    let run_id = scenario_sha256[..12].to_string();

    std::fs::create_dir_all(out_dir).map_err(|e| EngineError::io(out_dir, e))?;
    let scenario_copy = out_dir.join("scenario.json");
    std::fs::write(&scenario_copy, &canonical).map_err(|e| EngineError::io(&scenario_copy, e))?;

    let log_dir = out_dir.join("logs").join(&run_id);
    let trace_dir = out_dir.join("traces");
    let logs = LogSink::new(log_dir.clone()).map_err(|e| EngineError::io(&log_dir, e))?;
    let traces = TraceWriters::create(&trace_dir).map_err(|e| EngineError::io(&trace_dir, e))?;

    let mut engine = Engine::new(scenario, logs, traces)?;
    engine.init()?;
    engine.run_loop()?;
    let report = engine.finish(run_id, scenario_sha256, out_dir)?;

    let manifest_path = out_dir.join("manifest.json");
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        report: &report,
        scenario_file: "scenario.json",
        logs_dir: format!("logs/{}", report.run_id),
        position_trace: "traces/positions.csv",
        message_trace: "traces/messages.csv",
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&manifest_path, text).map_err(|e| EngineError::io(&manifest_path, e))?;
    Ok(report)
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

struct Engine<'a> {
    scenario: &'a Scenario,
    clock: SimTime,
    start: SimTime,
    end: SimTime,
    dt_ns: u64,
    dt_s: f64,
    queue: EventQueue,
    registry: BTreeMap<EntityId, Entity>,
    /// Deferred spawns per route, in planned order.
    pending_spawns: Vec<VecDeque<(EntityId, usize)>>,
    noise: RngStream,
    loss: RngStream,
    logs: LogSink,
    traces: TraceWriters,
    counters: Counters,
    spawned_by_route: Vec<u32>,
    next_msg_id: u64,
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario, logs: LogSink, traces: TraceWriters) -> Result<Self, EngineError> {
        let registry = RngRegistry::new(scenario.seed());
        let start = SimTime::from_secs_f64(scenario.start_s());
        let end = SimTime::from_secs_f64(scenario.end_s());
        Ok(Self {
            scenario,
            clock: start,
            start,
            end,
            dt_ns: SimTime::from_secs_f64(scenario.mobility_step_s()).as_ns(),
            dt_s: scenario.mobility_step_s(),
            queue: EventQueue::new(),
            registry: BTreeMap::new(),
            pending_spawns: vec![VecDeque::new(); scenario.routes.len()],
            noise: registry.stream("mobility-noise"),
            loss: registry.stream("radio-loss"),
            logs,
            traces,
            counters: Counters::default(),
            spawned_by_route: vec![0; scenario.routes.len()],
            next_msg_id: 0,
        })
    }

    /// Schedules the tick train, the spawn plan, and the RSU entities.
    ///
    /// Mobility ticks are pre-scheduled first so they carry the lowest
    /// sequence numbers: at any shared instant movement (and despawning)
    /// settles before spawns, and both before any radio send scheduled by
    /// earlier events. That fixed intra-instant order is what lets the KPI
    /// analyzer reconstruct in-range expectations exactly from the traces.
    fn init(&mut self) -> Result<(), EngineError> {
        let mut t = self.start.plus_ns(self.dt_ns);
        while t <= self.end {
            self.queue.schedule(self.start, t, EventPayload::MobilityTick)?;
            t = t.plus_ns(self.dt_ns);
        }

        let mut plan: Vec<(SimTime, usize, u32)> = Vec::new();
        for (flow_idx, flow) in self.scenario.doc.flows.iter().enumerate() {
            for (k, t) in mobility::spawn_schedule(flow, self.end).into_iter().enumerate() {
                plan.push((t, flow_idx, k as u32));
            }
        }
        plan.sort_by_key(|&(t, flow_idx, k)| (t, flow_idx, k));
        for (veh_index, (t, flow_idx, _)) in plan.into_iter().enumerate() {
            let vehicle = EntityId::new(EntityKind::Vehicle, veh_index as u32);
            self.queue
                .schedule(self.start, t, EventPayload::Spawn { vehicle, flow_idx })?;
        }

        for (i, site) in self.scenario.doc.rsus.iter().enumerate() {
            let id = EntityId::new(EntityKind::Rsu, i as u32);
            let addr = assign_address(id, &self.scenario.doc.ip_pools)?;
            let app = RsuApp::new(id, site.position());
            self.log(id, RSU_APP_NAME, LogLevel::Info, "Starting road side unit application")?;
            self.log(id, RSU_APP_NAME, LogLevel::Info, "Activating 802.11p AdHoc WiFi Module")?;
            self.traces
                .position(self.clock, id, "", 0.0, site.lat, site.lon, 0.0, "rsu")
                .map_err(|e| EngineError::io(&self.traces.position_path, e))?;
            let first_tick = self.start.plus_ns(app.sample_interval_ns);
            self.registry.insert(id, Entity::Rsu(RsuEntity { app, spawned_at: self.start, addr }));
            if first_tick <= self.end {
                self.queue
                    .schedule(self.start, first_tick, EventPayload::RsuTick { rsu: id })?;
            }
        }
        Ok(())
    }

    fn run_loop(&mut self) -> Result<(), EngineError> {
        while let Some(fire_at) = self.queue.next_fire_at() {
            if fire_at > self.end {
                break;
            }
            let event = self.queue.pop().expect("peeked event");
            debug_assert!(event.fire_at >= self.clock, "clock must not go backwards");
            self.clock = event.fire_at;
            let disposition = match event.payload {
                EventPayload::MobilityTick => self.on_mobility_tick()?,
                EventPayload::Spawn { vehicle, flow_idx } => self.on_spawn(vehicle, flow_idx)?,
                EventPayload::BeaconTimer { vehicle } => self.on_beacon_timer(vehicle)?,
                EventPayload::RsuTick { rsu } => self.on_rsu_tick(rsu)?,
                EventPayload::Deliver { receiver, envelope } => self.on_deliver(receiver, envelope)?,
            };
            match disposition {
                Disposition::Handled => self.counters.dispatched += 1,
                Disposition::Cancelled => self.counters.cancelled += 1,
            }
        }
        Ok(())
    }

    fn finish(
        mut self,
        run_id: String,
        scenario_sha256: String,
        out_dir: &Path,
    ) -> Result<SimulationReport, EngineError> {
        let ids: Vec<EntityId> = self.registry.keys().copied().collect();
        for id in ids {
            match id.kind {
                EntityKind::Vehicle => self.log(
                    id,
                    MERGE_ASSIST_APP_NAME,
                    LogLevel::Info,
                    "Shutting down Merge Assist application",
                )?,
                EntityKind::Rsu => self.log(
                    id,
                    RSU_APP_NAME,
                    LogLevel::Info,
                    "Shutting down road side unit application",
                )?,
            }
        }
        self.logs.flush().map_err(|e| EngineError::io(self.logs.root(), e))?;
        self.traces
            .flush()
            .map_err(|e| EngineError::io(&self.traces.position_path, e))?;

        let spawned_by_route = self
            .scenario
            .routes
            .iter()
            .zip(&self.spawned_by_route)
            .map(|(route, &spawned)| RouteSpawns {
                route_id: route.id.clone(),
                label: route.label,
                spawned,
            })
            .collect();
        let remaining = self.queue.len() as u64;
        debug_assert_eq!(
            self.queue.scheduled,
            self.counters.dispatched + self.counters.cancelled + remaining,
            "event conservation"
        );
        Ok(SimulationReport {
            run_id,
            scenario_sha256,
            random_seed: self.scenario.seed(),
            end_time_ns: self.end.as_ns(),
            vehicles_spawned: self.spawned_by_route.iter().sum(),
            spawned_by_route,
            messages_sent: self.counters.sent,
            messages_delivered: self.counters.delivered,
            messages_dropped: self.counters.dropped,
            events_scheduled: self.queue.scheduled,
            events_dispatched: self.counters.dispatched,
            events_cancelled: self.counters.cancelled,
            events_remaining: remaining,
            collision_faults: self.counters.collisions,
            out_dir: out_dir.display().to_string(),
            log_dir: self.logs.root().display().to_string(),
            position_trace: self.traces.position_path.display().to_string(),
            message_trace: self.traces.message_path.display().to_string(),
        })
    }

    fn log(
        &mut self,
        entity: EntityId,
        app: &'static str,
        level: LogLevel,
        message: &str,
    ) -> Result<(), EngineError> {
        self.logs
            .log(entity, app, level, message, self.clock)
            .map_err(|e| EngineError::io(self.logs.root(), e))
    }

    fn write_app_logs(
        &mut self,
        entity: EntityId,
        app: &'static str,
        lines: Vec<apps::LogLine>,
    ) -> Result<(), EngineError> {
        for (level, message) in lines {
            self.log(entity, app, level, &message)?;
        }
        Ok(())
    }

    /// True when the first `min_gap + length` meters of the route can accept
    /// a vehicle of `proto`.
    fn entry_free(&self, route_idx: usize, proto: &mobility::VehiclePrototype) -> bool {
        let entry_len = proto.min_gap + proto.length;
        !self.registry.values().any(|e| match e {
            Entity::Vehicle(v) => {
                v.route_idx == route_idx && v.state.s - v.state.prototype.length < entry_len
            }
            Entity::Rsu(_) => false,
        })
    }

    fn on_spawn(&mut self, vehicle: EntityId, flow_idx: usize) -> Result<Disposition, EngineError> {
        let flow = &self.scenario.doc.flows[flow_idx];
        let route_idx = self
            .scenario
            .route_index(&flow.route_id)
            .expect("validated flow route");
        if self.pending_spawns[route_idx].is_empty() && self.entry_free(route_idx, &flow.prototype) {
            self.spawn_vehicle(vehicle, flow_idx, route_idx)?;
        } else {
            self.pending_spawns[route_idx].push_back((vehicle, flow_idx));
        }
        Ok(Disposition::Handled)
    }

    fn spawn_vehicle(
        &mut self,
        vehicle: EntityId,
        flow_idx: usize,
        route_idx: usize,
    ) -> Result<(), EngineError> {
        let flow = &self.scenario.doc.flows[flow_idx];
        let route = &self.scenario.routes[route_idx];
        let position = route.position_at(0.0)?;
        let addr = assign_address(vehicle, &self.scenario.doc.ip_pools)?;
        let state = VehicleState {
            id: vehicle,
            route_id: route.id.clone(),
            label: route.label,
            s: 0.0,
            speed: 0.0,
            prototype: flow.prototype.clone(),
            commands: Default::default(),
            spawned_at: self.clock,
        };
        let app = MergeAssistApp::new();
        let setup = app.setup_logs();
        let route_id = route.id.clone();
        self.registry.insert(
            vehicle,
            Entity::Vehicle(VehicleEntity {
                state,
                position,
                app,
                route_idx,
                addr,
            }),
        );
        self.spawned_by_route[route_idx] += 1;
        self.write_app_logs(vehicle, MERGE_ASSIST_APP_NAME, setup)?;
        self.traces
            .position(self.clock, vehicle, &route_id, 0.0, position.lat, position.lon, 0.0, "drive")
            .map_err(|e| EngineError::io(&self.traces.position_path, e))?;
        self.queue
            .schedule(self.clock, self.clock, EventPayload::BeaconTimer { vehicle })?;
        Ok(())
    }

    fn on_mobility_tick(&mut self) -> Result<Disposition, EngineError> {
        // Snapshot per-route orderings so the update reads a consistent
        // pre-step world regardless of registry iteration.
        let route_count = self.scenario.routes.len();
        let mut per_route: Vec<Vec<(f64, f64, f64, EntityId)>> = vec![Vec::new(); route_count];
        for (id, entity) in &self.registry {
            if let Entity::Vehicle(v) = entity {
                per_route[v.route_idx].push((v.state.s, v.state.speed, v.state.prototype.length, *id));
            }
        }
        let mut leaders: BTreeMap<EntityId, LeaderView> = BTreeMap::new();
        for lane in &mut per_route {
            lane.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.3.cmp(&b.3)));
            for i in 1..lane.len() {
                let ahead = lane[i - 1];
                leaders.insert(
                    lane[i].3,
                    LeaderView {
                        s: ahead.0,
                        speed: ahead.1,
                        length: ahead.2,
                    },
                );
            }
        }

        let mut outcomes: Vec<(EntityId, StepOutcome)> = Vec::new();
        {
            let noise = &mut self.noise;
            let dt_s = self.dt_s;
            let clock = self.clock;
            for (id, entity) in &self.registry {
                if let Entity::Vehicle(v) = entity {
                    let out = mobility::step(
                        &v.state,
                        leaders.get(id),
                        dt_s,
                        clock,
                        &mut || noise.next_unit(),
                    );
                    outcomes.push((*id, out));
                }
            }
        }

        for (id, out) in outcomes {
            if out.collision {
                self.counters.collisions += 1;
            }
            let (route_idx, despawn) = {
                let Some(Entity::Vehicle(v)) = self.registry.get_mut(&id) else {
                    continue;
                };
                v.state.speed = out.speed;
                v.state.s = out.s;
                (v.route_idx, out.s > self.scenario.routes[v.route_idx].length_m)
            };
            let route = &self.scenario.routes[route_idx];
            if despawn {
                let end_pos = route.position_at(route.length_m)?;
                let route_id = route.id.clone();
                let length = route.length_m;
                self.traces
                    .position(self.clock, id, &route_id, length, end_pos.lat, end_pos.lon, out.speed, "despawn")
                    .map_err(|e| EngineError::io(&self.traces.position_path, e))?;
                self.log(
                    id,
                    MERGE_ASSIST_APP_NAME,
                    LogLevel::Info,
                    "Shutting down Merge Assist application",
                )?;
                self.registry.remove(&id);
                continue;
            }
            let position = route.position_at(out.s)?;
            let (kind, strength) = sensor_state(&self.scenario.doc.events, position, self.clock);
            let (cmds, lines, row) = {
                let Some(Entity::Vehicle(v)) = self.registry.get_mut(&id) else {
                    continue;
                };
                v.position = position;
                let ctx = apps::SenseContext {
                    position,
                    route_id: &v.state.route_id,
                };
                let (cmds, lines) = v.app.sense(Some(ctx), kind, strength, self.clock);
                for cmd in &cmds {
                    mobility::apply_command(&mut v.state, cmd);
                }
                let state_tag = if out.collision {
                    "collision"
                } else if v.state.speed == 0.0 {
                    "stop"
                } else if v.state.commands.is_restricted() {
                    "slow"
                } else {
                    "drive"
                };
                (cmds, lines, (v.state.route_id.clone(), v.state.s, v.state.speed, state_tag))
            };
            let _ = cmds;
            self.write_app_logs(id, MERGE_ASSIST_APP_NAME, lines)?;
            let (route_id, s, speed, state_tag) = row;
            self.traces
                .position(self.clock, id, &route_id, s, position.lat, position.lon, speed, state_tag)
                .map_err(|e| EngineError::io(&self.traces.position_path, e))?;
        }

        // Release deferred spawns in planned order, as far as entries allow.
        for route_idx in 0..route_count {
            while let Some(&(vehicle, flow_idx)) = self.pending_spawns[route_idx].front() {
                let proto = &self.scenario.doc.flows[flow_idx].prototype;
                if !self.entry_free(route_idx, proto) {
                    break;
                }
                self.pending_spawns[route_idx].pop_front();
                self.spawn_vehicle(vehicle, flow_idx, route_idx)?;
            }
        }
        Ok(Disposition::Handled)
    }

    fn on_beacon_timer(&mut self, vehicle: EntityId) -> Result<Disposition, EngineError> {
        let beacon = {
            let Some(Entity::Vehicle(v)) = self.registry.get(&vehicle) else {
                return Ok(Disposition::Cancelled);
            };
            BeaconMessage {
                vehicle,
                position: v.position,
                route_label: v.state.label,
                speed: v.state.speed,
                sent_at: self.clock,
            }
        };
        let envelope = V2XEnvelope {
            msg_id: self.take_msg_id(),
            sender: vehicle,
            sender_pos: beacon.position,
            sent_at: self.clock,
            payload: MessagePayload::Beacon(beacon),
            geocast_radius_m: Some(BEACON_GEOCAST_RADIUS_M),
        };
        self.send_envelope(envelope)?;
        self.log(vehicle, MERGE_ASSIST_APP_NAME, LogLevel::Info, "Sent DENM vehicle message")?;
        let next = self.clock.plus_ns(apps::BEACON_INTERVAL_NS);
        if next <= self.end {
            self.queue
                .schedule(self.clock, next, EventPayload::BeaconTimer { vehicle })?;
        }
        Ok(Disposition::Handled)
    }

    fn on_rsu_tick(&mut self, rsu: EntityId) -> Result<Disposition, EngineError> {
        let (controls, rsu_pos, interval) = {
            let Some(Entity::Rsu(r)) = self.registry.get_mut(&rsu) else {
                return Ok(Disposition::Cancelled);
            };
            (r.app.tick(self.clock), r.app.position, r.app.sample_interval_ns)
        };
        for control in controls {
            self.send_control(rsu, rsu_pos, control)?;
        }
        let next = self.clock.plus_ns(interval);
        if next <= self.end {
            self.queue
                .schedule(self.clock, next, EventPayload::RsuTick { rsu })?;
        }
        Ok(Disposition::Handled)
    }

    fn on_deliver(
        &mut self,
        receiver: EntityId,
        envelope: V2XEnvelope,
    ) -> Result<Disposition, EngineError> {
        let Some(entity) = self.registry.get(&receiver) else {
            // Receiver despawned while the message was in flight.
            return Ok(Disposition::Cancelled);
        };
        let receiver_pos = entity.position();
        if radio::loss_draw(&self.scenario.doc.radio, &mut self.loss) {
            self.counters.dropped += 1;
            self.traces
                .message(
                    self.clock,
                    "drop",
                    envelope.msg_id,
                    envelope.trace_type(),
                    envelope.sender,
                    &receiver.to_string(),
                    receiver_pos.lat,
                    receiver_pos.lon,
                )
                .map_err(|e| EngineError::io(&self.traces.message_path, e))?;
            return Ok(Disposition::Handled);
        }
        self.counters.delivered += 1;
        self.traces
            .message(
                self.clock,
                "recv",
                envelope.msg_id,
                envelope.trace_type(),
                envelope.sender,
                &receiver.to_string(),
                receiver_pos.lat,
                receiver_pos.lon,
            )
            .map_err(|e| EngineError::io(&self.traces.message_path, e))?;

        match &envelope.payload {
            MessagePayload::Beacon(beacon) => {
                let result = {
                    let Some(Entity::Rsu(r)) = self.registry.get_mut(&receiver) else {
                        return Ok(Disposition::Handled);
                    };
                    let (control, lines) = r.app.on_beacon(beacon, self.clock);
                    (control, lines, r.app.position)
                };
                let (control, lines, rsu_pos) = result;
                self.write_app_logs(receiver, RSU_APP_NAME, lines)?;
                self.send_control(receiver, rsu_pos, control)?;
            }
            MessagePayload::Control(control) => {
                if control.target != receiver {
                    return Ok(Disposition::Handled);
                }
                let lines = {
                    let Some(Entity::Vehicle(v)) = self.registry.get_mut(&receiver) else {
                        return Ok(Disposition::Handled);
                    };
                    let (cmds, lines) = v.app.on_control(control, self.clock);
                    for cmd in &cmds {
                        mobility::apply_command(&mut v.state, cmd);
                    }
                    lines
                };
                self.write_app_logs(receiver, MERGE_ASSIST_APP_NAME, lines)?;
            }
        }
        Ok(Disposition::Handled)
    }

    fn send_control(
        &mut self,
        rsu: EntityId,
        rsu_pos: GeoPoint,
        control: ControlMessage,
    ) -> Result<(), EngineError> {
        let envelope = V2XEnvelope {
            msg_id: self.take_msg_id(),
            sender: rsu,
            sender_pos: rsu_pos,
            sent_at: self.clock,
            payload: MessagePayload::Control(control),
            geocast_radius_m: None,
        };
        self.send_envelope(envelope)?;
        self.log(rsu, RSU_APP_NAME, LogLevel::Info, "Sent DENM vehicle message")?;
        Ok(())
    }

    /// Writes the send trace row and schedules one delivery per in-range
    /// receiver. Nodes spawned at this very instant are not receivers: their
    /// radio comes up after the frame is already in the air, and the rule
    /// keeps engine behavior reconstructable from row timestamps alone.
    fn send_envelope(&mut self, envelope: V2XEnvelope) -> Result<(), EngineError> {
        self.counters.sent += 1;
        self.traces
            .message(
                self.clock,
                "send",
                envelope.msg_id,
                envelope.trace_type(),
                envelope.sender,
                &envelope.trace_to(),
                envelope.sender_pos.lat,
                envelope.sender_pos.lon,
            )
            .map_err(|e| EngineError::io(&self.traces.message_path, e))?;
        let nodes: Vec<(EntityId, GeoPoint)> = self
            .registry
            .iter()
            .filter(|(id, entity)| **id != envelope.sender && entity.spawned_at() < self.clock)
            .map(|(id, entity)| (*id, entity.position()))
            .collect();
        let planned = radio::plan_broadcast(envelope.sender_pos, self.clock, &self.scenario.doc.radio, &nodes);
        for delivery in planned {
            self.queue.schedule(
                self.clock,
                delivery.deliver_at,
                EventPayload::Deliver {
                    receiver: delivery.receiver,
                    envelope: envelope.clone(),
                },
            )?;
        }
        Ok(())
    }

    fn take_msg_id(&mut self) -> u64 {
        let id = self.next_msg_id;
        self.next_msg_id += 1;
        id
    }
}
