//! Simulated coordinator/node message fabric.
//!
//! Delivery is instantaneous and lossless. Every transmitted message costs
//! one unit, and a coordinator broadcast costs one unit however many nodes
//! receive it. Each message is tallied under exactly one [`MessageKind`] and
//! appended to an in-order event log.

use std::fmt;
use std::io::{self, Write};
use std::ops::Sub;

use serde::{Deserialize, Serialize};

use crate::domain::{NodeId, Value};
use crate::error::{Error, Result};
use crate::protocols::Mode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    /// A node sends `(id, value)` during an extremum protocol.
    ProtocolUpload,
    /// The coordinator announces the running extremum after a protocol round.
    ProtocolRoundBroadcast,
    /// The coordinator announces a new filter boundary.
    FilterBroadcast,
    /// The coordinator starts a protocol on a participant group.
    InitiationBroadcast,
    /// Coordinator to a single node. Unused by the monitor.
    DirectDown,
}

impl MessageKind {
    pub const ALL: [MessageKind; 5] = [
        MessageKind::ProtocolUpload,
        MessageKind::ProtocolRoundBroadcast,
        MessageKind::FilterBroadcast,
        MessageKind::InitiationBroadcast,
        MessageKind::DirectDown,
    ];

    pub fn is_broadcast(self) -> bool {
        matches!(
            self,
            MessageKind::ProtocolRoundBroadcast
                | MessageKind::FilterBroadcast
                | MessageKind::InitiationBroadcast
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::ProtocolUpload => "ProtocolUpload",
            MessageKind::ProtocolRoundBroadcast => "ProtocolRoundBroadcast",
            MessageKind::FilterBroadcast => "FilterBroadcast",
            MessageKind::InitiationBroadcast => "InitiationBroadcast",
            MessageKind::DirectDown => "DirectDown",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Message counts per kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageTally {
    pub protocol_upload: u64,
    pub protocol_round_broadcast: u64,
    pub filter_broadcast: u64,
    pub initiation_broadcast: u64,
    pub direct_down: u64,
    pub total: u64,
}

impl MessageTally {
    pub fn get(&self, kind: MessageKind) -> u64 {
        match kind {
            MessageKind::ProtocolUpload => self.protocol_upload,
            MessageKind::ProtocolRoundBroadcast => self.protocol_round_broadcast,
            MessageKind::FilterBroadcast => self.filter_broadcast,
            MessageKind::InitiationBroadcast => self.initiation_broadcast,
            MessageKind::DirectDown => self.direct_down,
        }
    }

    fn bump(&mut self, kind: MessageKind) {
        let slot = match kind {
            MessageKind::ProtocolUpload => &mut self.protocol_upload,
            MessageKind::ProtocolRoundBroadcast => &mut self.protocol_round_broadcast,
            MessageKind::FilterBroadcast => &mut self.filter_broadcast,
            MessageKind::InitiationBroadcast => &mut self.initiation_broadcast,
            MessageKind::DirectDown => &mut self.direct_down,
        };
        *slot += 1;
        self.total += 1;
    }

    /// Every message except the per-round protocol broadcasts.
    pub fn without_round_broadcasts(&self) -> u64 {
        self.total - self.protocol_round_broadcast
    }
}

impl Sub for MessageTally {
    type Output = MessageTally;

    fn sub(self, rhs: MessageTally) -> MessageTally {
        MessageTally {
            protocol_upload: self.protocol_upload - rhs.protocol_upload,
            protocol_round_broadcast: self.protocol_round_broadcast - rhs.protocol_round_broadcast,
            filter_broadcast: self.filter_broadcast - rhs.filter_broadcast,
            initiation_broadcast: self.initiation_broadcast - rhs.initiation_broadcast,
            direct_down: self.direct_down - rhs.direct_down,
            total: self.total - rhs.total,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sender {
    Node(NodeId),
    Coordinator,
}

impl fmt::Display for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sender::Node(id) => write!(f, "{id}"),
            Sender::Coordinator => f.write_str("C"),
        }
    }
}

/// What a message carried, kept structured until the log is rendered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Value(Value),
    RunningExtremum { mode: Mode, value: Option<Value> },
    Midpoint { m: Value, top_k: Option<Vec<NodeId>> },
    ProtocolStart { mode: Mode, bound: u64, participants: usize },
    Text(String),
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Value(v) => write!(f, "value={v}"),
            Payload::RunningExtremum { mode, value: Some(v) } => write!(f, "{mode}={v}"),
            Payload::RunningExtremum { mode, value: None } => write!(f, "{mode}=none"),
            Payload::Midpoint { m, top_k } => {
                write!(f, "M={m}")?;
                if let Some(ids) = top_k {
                    f.write_str(";top=")?;
                    for (i, id) in ids.iter().enumerate() {
                        if i > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{id}")?;
                    }
                }
                Ok(())
            }
            Payload::ProtocolStart { mode, bound, participants } => {
                write!(f, "start={mode};N={bound};participants={participants}")
            }
            Payload::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventLogEntry {
    pub t: u64,
    pub kind: MessageKind,
    pub sender: Sender,
    pub payload: Payload,
}

impl fmt::Display for EventLogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} kind={} from={} info={}", self.t, self.kind, self.sender, self.payload)
    }
}

/// Message fabric of one simulation run.
#[derive(Debug, Default)]
pub struct Fabric {
    now: u64,
    tally: MessageTally,
    log: Vec<EventLogEntry>,
}

impl Fabric {
    pub fn new() -> Self {
        Fabric::default()
    }

    /// Sets the time stamp of subsequent log entries.
    pub fn set_time(&mut self, t: u64) {
        self.now = t;
    }

    pub fn time(&self) -> u64 {
        self.now
    }

    fn push(&mut self, kind: MessageKind, sender: Sender, payload: Payload) {
        self.tally.bump(kind);
        self.log.push(EventLogEntry { t: self.now, kind, sender, payload });
    }

    pub fn record_upload(&mut self, node: NodeId, payload: Payload) {
        self.push(MessageKind::ProtocolUpload, Sender::Node(node), payload);
    }

    pub fn record_broadcast(&mut self, kind: MessageKind, payload: Payload) -> Result<()> {
        if !kind.is_broadcast() {
            return Err(Error::NotBroadcast(kind));
        }
        self.push(kind, Sender::Coordinator, payload);
        Ok(())
    }

    pub fn record_direct(&mut self, payload: Payload) {
        self.push(MessageKind::DirectDown, Sender::Coordinator, payload);
    }

    pub fn tally_snapshot(&self) -> MessageTally {
        self.tally
    }

    pub fn export_event_log(&self) -> Vec<EventLogEntry> {
        self.log.clone()
    }

    pub fn event_log(&self) -> &[EventLogEntry] {
        &self.log
    }

    /// Writes the log as one `t=.. kind=.. from=.. info=..` line per message.
    pub fn write_event_log<W: Write>(&self, mut out: W) -> io::Result<()> {
        for entry in &self.log {
            writeln!(out, "{entry}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_fabric_is_empty() {
        let fabric = Fabric::new();
        assert_eq!(fabric.tally_snapshot(), MessageTally::default());
        assert!(fabric.export_event_log().is_empty());
    }

    #[test]
    fn uploads_are_counted() {
        let mut fabric = Fabric::new();
        fabric.record_upload(NodeId::new(1), Payload::Value(3));
        assert_eq!(fabric.tally_snapshot().total, 1);
        for i in 2..=4 {
            fabric.record_upload(NodeId::new(i), Payload::Value(i as u64));
        }
        let tally = fabric.tally_snapshot();
        assert_eq!(tally.protocol_upload, 4);
        assert_eq!(tally.total, 4);
    }

    #[test]
    fn broadcast_costs_one() {
        let mut fabric = Fabric::new();
        fabric
            .record_broadcast(MessageKind::FilterBroadcast, Payload::Midpoint { m: 7, top_k: None })
            .unwrap();
        let tally = fabric.tally_snapshot();
        assert_eq!(tally.filter_broadcast, 1);
        assert_eq!(tally.total, 1);

        fabric.record_upload(NodeId::new(2), Payload::Value(9));
        assert_eq!(fabric.tally_snapshot().total, 2);
    }

    #[test]
    fn upload_kind_is_not_a_broadcast() {
        let mut fabric = Fabric::new();
        let err = fabric
            .record_broadcast(MessageKind::ProtocolUpload, Payload::Text("x".into()))
            .unwrap_err();
        assert!(matches!(err, Error::NotBroadcast(MessageKind::ProtocolUpload)));
        assert!(fabric.record_broadcast(MessageKind::DirectDown, Payload::Value(1)).is_err());
        assert_eq!(fabric.tally_snapshot().total, 0);
    }

    #[test]
    fn tally_matches_log_and_kinds() {
        let mut fabric = Fabric::new();
        for (i, kind) in MessageKind::ALL.iter().cycle().take(23).enumerate() {
            fabric.set_time(i as u64 / 4);
            match kind {
                MessageKind::ProtocolUpload => fabric.record_upload(NodeId::new(1), Payload::Value(0)),
                MessageKind::DirectDown => fabric.record_direct(Payload::Value(0)),
                k => fabric.record_broadcast(*k, Payload::Value(0)).unwrap(),
            }
            let tally = fabric.tally_snapshot();
            assert_eq!(tally.total as usize, fabric.event_log().len());
            let sum: u64 = MessageKind::ALL.iter().map(|k| tally.get(*k)).sum();
            assert_eq!(sum, tally.total);
        }
    }

    #[test]
    fn log_line_format() {
        let mut fabric = Fabric::new();
        fabric.set_time(4);
        fabric.record_upload(NodeId::new(12), Payload::Value(33));
        fabric
            .record_broadcast(
                MessageKind::FilterBroadcast,
                Payload::Midpoint { m: 9, top_k: Some(vec![NodeId::new(1), NodeId::new(3)]) },
            )
            .unwrap();
        fabric
            .record_broadcast(
                MessageKind::ProtocolRoundBroadcast,
                Payload::RunningExtremum { mode: Mode::Min, value: None },
            )
            .unwrap();
        let mut out = Vec::new();
        fabric.write_event_log(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "t=4 kind=ProtocolUpload from=12 info=value=33\n\
             t=4 kind=FilterBroadcast from=C info=M=9;top=1,3\n\
             t=4 kind=ProtocolRoundBroadcast from=C info=min=none\n"
        );
    }

    #[test]
    fn tally_difference() {
        let mut fabric = Fabric::new();
        fabric.record_upload(NodeId::new(1), Payload::Value(0));
        let before = fabric.tally_snapshot();
        fabric.record_broadcast(MessageKind::FilterBroadcast, Payload::Value(0)).unwrap();
        let delta = fabric.tally_snapshot() - before;
        assert_eq!(delta.filter_broadcast, 1);
        assert_eq!(delta.protocol_upload, 0);
        assert_eq!(delta.total, 1);
    }
}
