//! Per-entity application logs and the position/message trace CSVs.
//!
//! The wall-clock column of the log line format is a fixed placeholder: real
//! timestamps would break byte-level reproducibility. Floats in the CSVs are
//! written with Rust's shortest round-trip formatting so analysis re-parses
//! the exact values the engine computed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::time::SimTime;
use super::EntityId;

/// Stand-in for the wall-clock column of the log line format.
pub const WALL_CLOCK_PLACEHOLDER: &str = "0000-00-00 00:00:00,000";

pub const POSITION_TRACE_HEADER: &str = "time_ns,entity,route_id,s_m,lat,lon,speed_mps,state";
pub const MESSAGE_TRACE_HEADER: &str = "time_ns,event,msg_id,msg_type,from,to,lat,lon";

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LogLevel {
    Info,
    Debug,
    Warn,
}

impl std::fmt::Display for LogLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LogLevel::Info => write!(f, "INFO"),
            LogLevel::Debug => write!(f, "DEBUG"),
            LogLevel::Warn => write!(f, "WARN"),
        }
    }
}

/// Lazily created per-(entity, application) log files under
/// `logs/<run-id>/<entity>/<AppName>.log`.
pub struct LogSink {
    root: PathBuf,
    files: BTreeMap<(EntityId, &'static str), BufWriter<File>>,
}

impl LogSink {
    pub fn new(root: PathBuf) -> io::Result<Self> {
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn log(
        &mut self,
        entity: EntityId,
        app: &'static str,
        level: LogLevel,
        message: &str,
        now: SimTime,
    ) -> io::Result<()> {
        let file = match self.files.entry((entity, app)) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                let dir = self.root.join(entity.to_string());
                std::fs::create_dir_all(&dir)?;
                let f = File::create(dir.join(format!("{app}.log")))?;
                e.insert(BufWriter::new(f))
            }
        };
        writeln!(
            file,
            "{WALL_CLOCK_PLACEHOLDER} {level} - {message} (at simulation time {now} s)"
        )
    }

    pub fn flush(&mut self) -> io::Result<()> {
        for file in self.files.values_mut() {
            file.flush()?;
        }
        Ok(())
    }
}

/// The two run-wide CSV traces.
pub struct TraceWriters {
    positions: BufWriter<File>,
    messages: BufWriter<File>,
    pub position_path: PathBuf,
    pub message_path: PathBuf,
}

impl TraceWriters {
    pub fn create(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let position_path = dir.join("positions.csv");
        let message_path = dir.join("messages.csv");
        let mut positions = BufWriter::new(File::create(&position_path)?);
        let mut messages = BufWriter::new(File::create(&message_path)?);
        writeln!(positions, "{POSITION_TRACE_HEADER}")?;
        writeln!(messages, "{MESSAGE_TRACE_HEADER}")?;
        Ok(Self {
            positions,
            messages,
            position_path,
            message_path,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn position(
        &mut self,
        time: SimTime,
        entity: EntityId,
        route_id: &str,
        s_m: f64,
        lat: f64,
        lon: f64,
        speed_mps: f64,
        state: &str,
    ) -> io::Result<()> {
        writeln!(
            self.positions,
            "{},{},{},{},{},{},{},{}",
            time.as_ns(),
            entity,
            route_id,
            s_m,
            lat,
            lon,
            speed_mps,
            state
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn message(
        &mut self,
        time: SimTime,
        event: &str,
        msg_id: u64,
        msg_type: &str,
        from: EntityId,
        to: &str,
        lat: f64,
        lon: f64,
    ) -> io::Result<()> {
        writeln!(
            self.messages,
            "{},{},{},{},{},{},{},{}",
            time.as_ns(),
            event,
            msg_id,
            msg_type,
            from,
            to,
            lat,
            lon
        )
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.positions.flush()?;
        self.messages.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EntityKind;

    #[test]
    fn log_line_matches_format() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = LogSink::new(dir.path().join("logs").join("run")).unwrap();
        let rsu = EntityId::new(EntityKind::Rsu, 0);
        sink.log(
            rsu,
            "CastelldefelsRSU",
            LogLevel::Info,
            "Received message from veh_0",
            SimTime::from_ns(91_001_400_000),
        )
        .unwrap();
        sink.flush().unwrap();
        let text = std::fs::read_to_string(
            dir.path()
                .join("logs")
                .join("run")
                .join("rsu_0")
                .join("CastelldefelsRSU.log"),
        )
        .unwrap();
        assert_eq!(
            text,
            "0000-00-00 00:00:00,000 INFO - Received message from veh_0 (at simulation time 91.001,400,000 s)\n"
        );
    }
}
