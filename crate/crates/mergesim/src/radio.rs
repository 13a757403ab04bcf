//! Broadcast ad-hoc medium: unit-disc delivery of single-hop broadcasts with
//! fixed latency and optional independent per-reception loss.
//!
//! There is no interference or propagation model. Range is an explicit
//! scalar; power and channel ride along as labels for log fidelity. Range
//! checks use the sender position at send time.

use serde::{Deserialize, Serialize};

use crate::apps::{BeaconMessage, ControlMessage, Decision};
use crate::engine::rng::RngStream;
use crate::engine::time::SimTime;
use crate::engine::EntityId;
use crate::world::{geo_distance, GeoPoint};

fn default_range() -> f64 {
    300.0
}

fn default_latency() -> f64 {
    0.0009
}

fn default_power() -> f64 {
    50.0
}

fn default_channel() -> String {
    "CCH".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    #[serde(default = "default_range")]
    pub range_m: f64,
    /// One-way delivery latency in seconds (default 900 microseconds).
    #[serde(default = "default_latency")]
    pub latency_s: f64,
    /// Independent Bernoulli loss per (message, receiver).
    #[serde(default)]
    pub loss_prob: f64,
    /// Informational transmit power label.
    #[serde(default = "default_power")]
    pub power_mw: f64,
    /// Informational channel label.
    #[serde(default = "default_channel")]
    pub channel: String,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            range_m: default_range(),
            latency_s: default_latency(),
            loss_prob: 0.0,
            power_mw: default_power(),
            channel: default_channel(),
        }
    }
}

impl RadioConfig {
    pub fn latency_ns(&self) -> u64 {
        (self.latency_s * 1e9).round() as u64
    }
}

/// Unit-disc membership: within range iff the great-circle distance does not
/// exceed the configured range (closed boundary).
pub fn in_range(a: GeoPoint, b: GeoPoint, cfg: &RadioConfig) -> bool {
    geo_distance(a, b) <= cfg.range_m
}

/// One independent loss draw for a (message, receiver) pair.
pub fn loss_draw(cfg: &RadioConfig, stream: &mut RngStream) -> bool {
    stream.next_unit() < cfg.loss_prob
}

#[derive(Clone, Debug, PartialEq)]
pub enum MessagePayload {
    Beacon(BeaconMessage),
    Control(ControlMessage),
}

/// A payload wrapped with routing metadata for the broadcast medium. The
/// sender position is mandatory message content, matching the inter-vehicle
/// wire format.
#[derive(Clone, Debug, PartialEq)]
pub struct V2XEnvelope {
    pub msg_id: u64,
    pub sender: EntityId,
    pub sender_pos: GeoPoint,
    pub sent_at: SimTime,
    pub payload: MessagePayload,
    /// Geocast destination radius carried for fidelity; does not alter
    /// unit-disc delivery.
    pub geocast_radius_m: Option<f64>,
}

impl V2XEnvelope {
    /// Message type tag used in the message trace.
    pub fn trace_type(&self) -> &'static str {
        match &self.payload {
            MessagePayload::Beacon(_) => "beacon",
            MessagePayload::Control(c) => match c.decision {
                Decision::Drive => "control_drive",
                Decision::Stop => "control_stop",
            },
        }
    }

    /// Addressee recorded in the send trace row: broadcasts carry `*`,
    /// controls carry the vehicle they are addressed to (delivery is still
    /// broadcast; receivers filter).
    pub fn trace_to(&self) -> String {
        match &self.payload {
            MessagePayload::Beacon(_) => "*".to_string(),
            MessagePayload::Control(c) => c.target.to_string(),
        }
    }
}

/// A delivery scheduled for one in-range receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedDelivery {
    pub receiver: EntityId,
    pub deliver_at: SimTime,
}

/// Plans single-hop deliveries for a broadcast: every listed node within
/// range of the sender position receives the message exactly latency later.
/// Loss is drawn per reception at delivery time, not here, so that late
/// receiver disappearance and loss stay separable in the traces.
pub fn plan_broadcast(
    sender_pos: GeoPoint,
    sent_at: SimTime,
    cfg: &RadioConfig,
    nodes: &[(EntityId, GeoPoint)],
) -> Vec<PlannedDelivery> {
    let deliver_at = sent_at.plus_ns(cfg.latency_ns());
    nodes
        .iter()
        .filter(|(_, pos)| in_range(sender_pos, *pos, cfg))
        .map(|(id, _)| PlannedDelivery {
            receiver: *id,
            deliver_at,
        })
        .collect()
}
