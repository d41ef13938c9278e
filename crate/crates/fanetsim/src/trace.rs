//! JSONL trace: line 1 is a header object (tool, effective seed, scenario
//! digest, resolved parameters, node/app echo), every further line is one
//! record with a fixed field order. Timestamps never decrease in file order,
//! which makes byte-comparison a valid determinism check.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::engine::{NodeId, SimTime};
use crate::mobility::Position;
use crate::protocol::{MsgKind, ProtocolParams, WireMessage};

pub const TOOL_NAME: &str = "fanetsim";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Echo of one node's declarative app setup, times resolved to microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEcho {
    pub id: String,
    pub role: String,
    pub subscribers: Vec<String>,
    pub publishers: Vec<PublisherEcho>,
    pub queriers: Vec<QuerierEcho>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublisherEcho {
    pub key: String,
    pub payload_bytes: u64,
    pub period_us: SimTime,
    pub start_us: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerierEcho {
    pub expr: String,
    pub period_us: SimTime,
    pub start_us: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub scenario_sha256: String,
    pub duration_us: SimTime,
    pub channel: ChannelParams,
    pub protocol: ProtocolParams,
    pub nodes: Vec<NodeEcho>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEvent {
    Send,
    Recv,
    DupDrop,
    RangeDrop,
    LossDrop,
    Deliver,
    Expire,
    Pos,
}

/// One trace line. Message events fill `msg_id..origin_time`; position
/// samples fill `x..z`; absent fields are omitted from the JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: SimTime,
    pub node: String,
    pub event: TraceEvent,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub msg_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kind: Option<MsgKind>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub key: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub payload_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hops_taken: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub origin_time: Option<SimTime>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub z: Option<f64>,
}

impl TraceRecord {
    /// Splits a `name:seq` message id back into its parts.
    pub fn split_msg_id(msg_id: &str) -> Option<(&str, u64)> {
        let (name, seq) = msg_id.rsplit_once(':')?;
        Some((name, seq.parse().ok()?))
    }
}

/// Serializing writer that timestamps records from events as they fire and
/// enforces the non-decreasing-time invariant.
pub struct TraceWriter<W: Write> {
    out: W,
    names: Vec<String>,
    last_t: SimTime,
}

impl<W: Write> TraceWriter<W> {
    /// Writes the header line immediately. `names[i]` is the id of node `i`.
    pub fn new(mut out: W, header: &TraceHeader, names: Vec<String>) -> io::Result<Self> {
        let line = serde_json::to_string(header).expect("header serializes");
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        Ok(TraceWriter {
            out,
            names,
            last_t: SimTime::ZERO,
        })
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        &self.names[node.idx()]
    }

    pub fn format_msg_id(&self, id: crate::protocol::MsgId) -> String {
        format!("{}:{}", self.names[id.origin.idx()], id.seq)
    }

    fn write_record(&mut self, rec: &TraceRecord) -> io::Result<()> {
        assert!(
            rec.t >= self.last_t,
            "trace time went backwards: {} after {}",
            rec.t,
            self.last_t
        );
        self.last_t = rec.t;
        let line = serde_json::to_string(rec).expect("record serializes");
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")
    }

    /// Logs a message event. `hops_taken` is the consumed count at this node
    /// (for a Send, the value the copy carries on the air).
    pub fn message(
        &mut self,
        t: SimTime,
        node: NodeId,
        event: TraceEvent,
        msg: &WireMessage,
        hops_taken: u32,
    ) -> io::Result<()> {
        let rec = TraceRecord {
            t,
            node: self.names[node.idx()].clone(),
            event,
            msg_id: Some(self.format_msg_id(msg.msg_id)),
            kind: Some(msg.kind),
            key: Some(msg.key.to_string()),
            payload_bytes: Some(msg.payload_bytes),
            hops_taken: Some(hops_taken),
            origin_time: Some(msg.origin_time),
            x: None,
            y: None,
            z: None,
        };
        self.write_record(&rec)
    }

    /// Logs a pending-query expiry.
    pub fn expire(
        &mut self,
        t: SimTime,
        node: NodeId,
        query: crate::protocol::MsgId,
        key: &str,
        origin_time: SimTime,
    ) -> io::Result<()> {
        let rec = TraceRecord {
            t,
            node: self.names[node.idx()].clone(),
            event: TraceEvent::Expire,
            msg_id: Some(self.format_msg_id(query)),
            kind: Some(MsgKind::Query),
            key: Some(key.to_string()),
            payload_bytes: Some(0),
            hops_taken: Some(0),
            origin_time: Some(origin_time),
            x: None,
            y: None,
            z: None,
        };
        self.write_record(&rec)
    }

    /// Logs a position sample.
    pub fn pos(&mut self, t: SimTime, node: NodeId, p: Position) -> io::Result<()> {
        let rec = TraceRecord {
            t,
            node: self.names[node.idx()].clone(),
            event: TraceEvent::Pos,
            msg_id: None,
            kind: None,
            key: None,
            payload_bytes: None,
            hops_taken: None,
            origin_time: None,
            x: Some(p.x),
            y: Some(p.y),
            z: Some(p.z),
        };
        self.write_record(&rec)
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Reads a whole trace back: header line plus all records.
pub fn read_trace<R: BufRead>(reader: R) -> io::Result<(TraceHeader, Vec<TraceRecord>)> {
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "empty trace file"))??;
    let header: TraceHeader = serde_json::from_str(&header_line).map_err(|e| {
        io::Error::new(io::ErrorKind::InvalidData, format!("bad trace header: {e}"))
    })?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("bad trace record on line {}: {e}", i + 2),
            )
        })?;
        records.push(rec);
    }
    Ok((header, records))
}
