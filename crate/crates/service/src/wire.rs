//! Newline-delimited JSON protocol shared by device clients, UI clients and
//! the hub. Every message is one JSON object with a `type` field.

use disimo_core::cluster::SessionSnapshot;
use disimo_core::Rgb;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SESSION: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlOp {
    Grasp,
    Release,
    SetPace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WireMessage {
    Hello {
        device: String,
        color: Rgb,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
    },
    Status {
        device: String,
        active: bool,
        coherent: bool,
    },
    Bye {
        device: String,
    },
    Control {
        device: String,
        op: ControlOp,
        /// Breaths per minute for `set_pace`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
    },
    Snapshot {
        color: Rgb,
        brightness: f64,
        active: usize,
        members: usize,
    },
    Invite {},
    Error {
        code: String,
        msg: String,
    },
}

impl WireMessage {
    pub fn error(code: &str, msg: impl Into<String>) -> Self {
        WireMessage::Error { code: code.to_string(), msg: msg.into() }
    }

    pub fn snapshot(s: &SessionSnapshot) -> Self {
        WireMessage::Snapshot {
            color: s.color,
            brightness: s.brightness,
            active: s.active_count,
            members: s.member_count,
        }
    }

    pub fn as_snapshot(&self) -> Option<SessionSnapshot> {
        match *self {
            WireMessage::Snapshot { color, brightness, active, members } => Some(SessionSnapshot {
                color,
                brightness,
                active_count: active,
                member_count: members,
            }),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            WireMessage::Hello { .. } => "hello",
            WireMessage::Status { .. } => "status",
            WireMessage::Bye { .. } => "bye",
            WireMessage::Control { .. } => "control",
            WireMessage::Snapshot { .. } => "snapshot",
            WireMessage::Invite {} => "invite",
            WireMessage::Error { .. } => "error",
        }
    }

    /// Serialized form without the trailing newline.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn to_line(&self) -> String {
        let mut s = self.to_json();
        s.push('\n');
        s
    }
}

const KNOWN_TYPES: [&str; 7] = ["hello", "status", "bye", "control", "snapshot", "invite", "error"];

/// Error replies use `bad_msg` for anything unparseable and `unknown_type`
/// for a well-formed object whose `type` is not part of the protocol.
pub fn parse_line(line: &str) -> Result<WireMessage, WireMessage> {
    let value: serde_json::Value =
        serde_json::from_str(line.trim()).map_err(|e| WireMessage::error("bad_msg", e.to_string()))?;
    let ty = value
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| WireMessage::error("bad_msg", "message needs a string `type` field"))?;
    if !KNOWN_TYPES.contains(&ty) {
        return Err(WireMessage::error("unknown_type", format!("unknown message type `{ty}`")));
    }
    serde_json::from_value(value).map_err(|e| WireMessage::error("bad_msg", e.to_string()))
}
