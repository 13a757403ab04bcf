//! Integer-nanosecond simulation clock.
//!
//! The clock is an unsigned nanosecond count since simulation start. Keeping
//! it integral is what makes trace files byte-reproducible; a floating-point
//! clock would accumulate formatting drift.

use serde::{Deserialize, Serialize};

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

/// Nanoseconds since simulation start.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * NANOS_PER_SEC)
    }

    /// Nearest-nanosecond conversion from seconds.
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * NANOS_PER_SEC as f64).round() as u64)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    pub const fn plus_ns(self, ns: u64) -> Self {
        SimTime(self.0 + ns)
    }

    pub fn since(self, earlier: SimTime) -> u64 {
        self.0 - earlier.0
    }
}

impl std::fmt::Display for SimTime {
    /// Seconds with nine decimals grouped in threes: `91.001,400,000`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let secs = self.0 / NANOS_PER_SEC;
        let frac = self.0 % NANOS_PER_SEC;
        write!(
            f,
            "{}.{:03},{:03},{:03}",
            secs,
            frac / 1_000_000,
            (frac / 1_000) % 1_000,
            frac % 1_000
        )
    }
}
