//! Event log of a run. Every metric can be rebuilt from it.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crate::domain::{OrderId, VehicleId};
use crate::network::NodeId;

pub const EVENT_HEADER: &str = "time_s,event,order_id,vehicle_id,node,detail";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Order admitted; detail carries `dest`, `max_wait_s` and `rounds`.
    Arrive,
    /// Order assigned; detail carries `kind`, `pickup_m` and, for pooled
    /// assignments, `partner`, `mode` and `saving_m`.
    Assign,
    /// Order kept waiting by choice; detail carries `k`.
    Wait,
    Cancel,
    Pickup,
    /// Detail carries `ride_m`, `shared_m` and `direct_m`.
    Dropoff,
    /// A vehicle emptied; detail carries `occupied_m` and `riders`.
    TripEnd,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrive => "arrive",
            EventKind::Assign => "assign",
            EventKind::Wait => "wait",
            EventKind::Cancel => "cancel",
            EventKind::Pickup => "pickup",
            EventKind::Dropoff => "dropoff",
            EventKind::TripEnd => "trip_end",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "arrive" => EventKind::Arrive,
            "assign" => EventKind::Assign,
            "wait" => EventKind::Wait,
            "cancel" => EventKind::Cancel,
            "pickup" => EventKind::Pickup,
            "dropoff" => EventKind::Dropoff,
            "trip_end" => EventKind::TripEnd,
            other => return Err(format!("unknown event `{other}`")),
        })
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time_s: f64,
    pub kind: EventKind,
    pub order: Option<OrderId>,
    pub vehicle: Option<VehicleId>,
    pub node: Option<NodeId>,
    /// `key=value` pairs separated by `;`.
    pub detail: String,
}

impl Event {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.detail.split(';').find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EventLogError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("event log line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `# ` comment lines, the header and one row per event.
pub fn write_events(path: &Path, comments: &[String], events: &[Event]) -> Result<(), EventLogError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{EVENT_HEADER}")?;
    for e in events {
        writeln!(w, "{},{},{},{},{},{}", e.time_s, e.kind, opt(e.order), opt(e.vehicle), opt(e.node), e.detail)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, EventLogError> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    let mut seen_header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !seen_header {
            if line != EVENT_HEADER {
                return Err(EventLogError::Parse { line: n, msg: format!("expected header `{EVENT_HEADER}`") });
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.splitn(6, ',').collect();
        if f.len() != 6 {
            return Err(EventLogError::Parse { line: n, msg: "expected 6 fields".into() });
        }
        let err = |msg: String| EventLogError::Parse { line: n, msg };
        let num = |s: &str| -> Result<Option<u64>, EventLogError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| err(format!("bad integer `{s}`")))
            }
        };
        out.push(Event {
            time_s: f[0].parse().map_err(|_| err(format!("bad time `{}`", f[0])))?,
            kind: f[1].parse().map_err(err)?,
            order: num(f[2])?,
            vehicle: num(f[3])?.map(|v| v as VehicleId),
            node: num(f[4])?.map(|v| v as NodeId),
            detail: f[5].to_string(),
        });
    }
    Ok(out)
}
