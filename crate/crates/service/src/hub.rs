//! Transport-independent hub logic.
//!
//! [`Hub`] owns every session and processes one received line at a time,
//! returning the deliveries it causes. The network server and the scenario
//! runner both drive this same type, so message handling is identical
//! whether peers sit behind TCP, WebSocket or an in-memory queue.
//!
//! Device ids are unique across the whole hub, which lets a UI client
//! address `control` messages by device id alone.

use std::collections::BTreeMap;

use disimo_core::cluster::{MemberStatus, Session, SessionSnapshot};
use disimo_core::Rgb;
use serde::Serialize;

use crate::wire::{parse_line, ControlOp, WireMessage, DEFAULT_SESSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ConnId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub enum Delivery {
    Send(ConnId, WireMessage),
    /// Close the connection after flushing anything queued before this.
    Close(ConnId),
}

/// Cluster-relevant receipts and the snapshots they produced, in the order
/// the hub processed them.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum JournalEntry {
    Join { session: String, device: String, color: Rgb },
    Status { session: String, device: String, active: bool, coherent: bool },
    Leave { session: String, device: String },
    Broadcast { session: String, snapshot: SessionSnapshot },
}

#[derive(Debug, Clone)]
struct Member {
    session: String,
    device: String,
    color: Rgb,
}

#[derive(Debug, Default)]
pub struct Hub {
    next_conn: u64,
    conns: BTreeMap<ConnId, Option<Member>>,
    devices: BTreeMap<String, ConnId>,
    sessions: BTreeMap<String, Session>,
    journal: Option<Vec<JournalEntry>>,
}

impl Hub {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_journal() -> Self {
        Hub { journal: Some(Vec::new()), ..Default::default() }
    }

    pub fn journal(&self) -> &[JournalEntry] {
        self.journal.as_deref().unwrap_or(&[])
    }

    pub fn session(&self, name: &str) -> Option<&Session> {
        self.sessions.get(name)
    }

    pub fn device_conn(&self, device: &str) -> Option<ConnId> {
        self.devices.get(device).copied()
    }

    fn record(&mut self, e: JournalEntry) {
        if let Some(j) = self.journal.as_mut() {
            j.push(e);
        }
    }

    pub fn connect(&mut self) -> ConnId {
        let id = ConnId(self.next_conn);
        self.next_conn += 1;
        self.conns.insert(id, None);
        id
    }

    pub fn receive(&mut self, conn: ConnId, line: &str) -> Vec<Delivery> {
        if line.trim().is_empty() {
            return Vec::new();
        }
        match parse_line(line) {
            Ok(msg) => self.handle(conn, msg),
            Err(reply) => vec![Delivery::Send(conn, reply)],
        }
    }

    pub fn handle(&mut self, conn: ConnId, msg: WireMessage) -> Vec<Delivery> {
        if !self.conns.contains_key(&conn) {
            return Vec::new();
        }
        let err = |code: &str, m: String| vec![Delivery::Send(conn, WireMessage::error(code, m))];
        match msg {
            WireMessage::Hello { device, color, session } => {
                if self.conns[&conn].is_some() {
                    return err("already_joined", "this connection already said hello".into());
                }
                if self.devices.contains_key(&device) {
                    let mut out = err("dup_id", format!("device `{device}` is already connected"));
                    out.push(Delivery::Close(conn));
                    return out;
                }
                let session = session.unwrap_or_else(|| DEFAULT_SESSION.to_string());
                self.devices.insert(device.clone(), conn);
                self.conns.insert(conn, Some(Member { session: session.clone(), device: device.clone(), color }));
                self.record(JournalEntry::Join { session: session.clone(), device: device.clone(), color });
                let snap = self.sessions.entry(session.clone()).or_default().join(&device, color);
                self.broadcast(&session, snap)
            }
            WireMessage::Status { device, active, coherent } => {
                let Some(member) = self.owned(conn, &device) else {
                    return err("not_member", format!("`{device}` has not joined on this connection"));
                };
                let status = MemberStatus::new(&device, member.color).with_flags(active, coherent);
                let session = member.session.clone();
                let change = match self.sessions.get_mut(&session).map(|s| s.on_member_change(status)) {
                    Some(Ok(change)) => change,
                    Some(Err(e)) => return err("bad_status", e.to_string()),
                    None => return err("not_member", format!("no session for `{device}`")),
                };
                self.record(JournalEntry::Status { session: session.clone(), device, active, coherent });
                let mut out = self.broadcast(&session, change.snapshot);
                for target in change.invites {
                    if let Some(&c) = self.devices.get(&target) {
                        out.push(Delivery::Send(c, WireMessage::Invite {}));
                    }
                }
                out
            }
            WireMessage::Bye { device } => {
                if self.owned(conn, &device).is_none() {
                    return err("not_member", format!("`{device}` has not joined on this connection"));
                }
                self.leave(conn)
            }
            WireMessage::Control { device, op, value } => {
                if op == ControlOp::SetPace && !value.is_some_and(|v| v.is_finite() && v > 0.0) {
                    return err("bad_msg", "set_pace needs a positive breaths-per-minute value".into());
                }
                match self.devices.get(&device) {
                    Some(&target) => vec![Delivery::Send(target, WireMessage::Control { device, op, value })],
                    None => err("unknown_device", format!("no connected device `{device}`")),
                }
            }
            other => err("bad_msg", format!("`{}` is not accepted by the hub", other.kind())),
        }
    }

    /// Treats the connection as having said `bye`.
    pub fn disconnect(&mut self, conn: ConnId) -> Vec<Delivery> {
        let out = self.leave(conn);
        self.conns.remove(&conn);
        out
    }

    fn owned(&self, conn: ConnId, device: &str) -> Option<&Member> {
        self.conns.get(&conn)?.as_ref().filter(|m| m.device == device)
    }

    fn leave(&mut self, conn: ConnId) -> Vec<Delivery> {
        let Some(Some(member)) = self.conns.get_mut(&conn).map(Option::take) else {
            return Vec::new();
        };
        self.devices.remove(&member.device);
        self.record(JournalEntry::Leave { session: member.session.clone(), device: member.device.clone() });
        let Some(session) = self.sessions.get_mut(&member.session) else {
            return Vec::new();
        };
        let snap = session.leave(&member.device).ok().flatten();
        if session.is_empty() {
            self.sessions.remove(&member.session);
            return Vec::new();
        }
        self.broadcast(&member.session, snap)
    }

    fn broadcast(&mut self, session: &str, snap: Option<SessionSnapshot>) -> Vec<Delivery> {
        let Some(snap) = snap else {
            return Vec::new();
        };
        self.record(JournalEntry::Broadcast { session: session.to_string(), snapshot: snap });
        let msg = WireMessage::snapshot(&snap);
        self.sessions
            .get(session)
            .into_iter()
            .flat_map(|s| s.member_ids())
            .filter_map(|id| self.devices.get(id))
            .map(|&c| Delivery::Send(c, msg.clone()))
            .collect()
    }
}
