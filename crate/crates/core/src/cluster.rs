//! Shared-session aggregation.
//!
//! Active members' colors are averaged per channel and the session
//! brightness is the fraction of active members that are coherent. The
//! resulting [`SessionSnapshot`] deliberately has no per-member fields.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Rgb};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberStatus {
    pub device_id: String,
    pub color: Rgb,
    pub active: bool,
    pub coherent: bool,
}

impl MemberStatus {
    pub fn new(device_id: impl Into<String>, color: Rgb) -> Self {
        MemberStatus { device_id: device_id.into(), color, active: false, coherent: false }
    }

    pub fn with_flags(mut self, active: bool, coherent: bool) -> Self {
        self.active = active;
        self.coherent = coherent;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.coherent && !self.active {
            return Err(Error::invalid(format!("`{}` cannot be coherent while inactive", self.device_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub color: Rgb,
    pub brightness: f64,
    pub active_count: usize,
    pub member_count: usize,
}

/// Per-channel mean over active members, rounded down. Black when nobody
/// is active.
pub fn mix_colors<'a>(members: impl IntoIterator<Item = &'a MemberStatus>) -> Rgb {
    let (mut n, mut r, mut g, mut b) = (0u64, 0u64, 0u64, 0u64);
    for m in members.into_iter().filter(|m| m.active) {
        n += 1;
        r += u64::from(m.color.r);
        g += u64::from(m.color.g);
        b += u64::from(m.color.b);
    }
    if n == 0 {
        return Rgb::BLACK;
    }
    // a mean of u8 values always fits in u8
    Rgb::new((r / n) as u8, (g / n) as u8, (b / n) as u8)
}

/// Coherent / active, or 0 with nobody active.
pub fn brightness<'a>(members: impl IntoIterator<Item = &'a MemberStatus>) -> f64 {
    let (active, coherent) = members
        .into_iter()
        .filter(|m| m.active)
        .fold((0usize, 0usize), |(a, c), m| (a + 1, c + usize::from(m.coherent)));
    if active == 0 {
        0.0
    } else {
        coherent as f64 / active as f64
    }
}

pub fn snapshot_of<'a, I>(members: I) -> SessionSnapshot
where
    I: IntoIterator<Item = &'a MemberStatus>,
    I::IntoIter: Clone,
{
    let it = members.into_iter();
    SessionSnapshot {
        color: mix_colors(it.clone()),
        brightness: brightness(it.clone()),
        active_count: it.clone().filter(|m| m.active).count(),
        member_count: it.count(),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemberChange {
    /// Present only when the aggregate actually changed.
    pub snapshot: Option<SessionSnapshot>,
    /// Other members to wake, non-empty only on an inactive → active edge.
    pub invites: Vec<String>,
}

/// Membership and last published snapshot of one session.
#[derive(Debug, Clone, Default)]
pub struct Session {
    members: BTreeMap<String, MemberStatus>,
    last: Option<SessionSnapshot>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.contains_key(id)
    }

    pub fn members(&self) -> impl Iterator<Item = &MemberStatus> + Clone {
        self.members.values()
    }

    pub fn member_ids(&self) -> impl Iterator<Item = &str> {
        self.members.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        snapshot_of(self.members.values())
    }

    pub fn last_snapshot(&self) -> Option<SessionSnapshot> {
        self.last
    }

    fn publish(&mut self) -> Option<SessionSnapshot> {
        let snap = self.snapshot();
        if self.last == Some(snap) {
            return None;
        }
        self.last = Some(snap);
        Some(snap)
    }

    /// Registers an inactive member. Joining always changes the member
    /// count, so a snapshot is returned unless the id was already present.
    pub fn join(&mut self, id: &str, color: Rgb) -> Option<SessionSnapshot> {
        if self.members.contains_key(id) {
            return None;
        }
        self.members.insert(id.to_string(), MemberStatus::new(id, color));
        self.publish()
    }

    pub fn leave(&mut self, id: &str) -> Result<Option<SessionSnapshot>> {
        self.members.remove(id).ok_or_else(|| Error::NotAMember(id.to_string()))?;
        Ok(self.publish())
    }

    pub fn on_member_change(&mut self, status: MemberStatus) -> Result<MemberChange> {
        status.validate()?;
        let slot = self
            .members
            .get_mut(&status.device_id)
            .ok_or_else(|| Error::NotAMember(status.device_id.clone()))?;
        let woke = !slot.active && status.active;
        *slot = status;
        let invites = if woke {
            let me = &slot.device_id.clone();
            self.members.keys().filter(|k| *k != me).cloned().collect()
        } else {
            Vec::new()
        };
        Ok(MemberChange { snapshot: self.publish(), invites })
    }
}
