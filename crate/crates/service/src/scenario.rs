//! Scripted multi-user sessions on a simulated clock.
//!
//! A scenario file lists users (id, color, heart source) and a timeline of
//! UI controls. [`run`] wires one [`DeviceHost`] per user and a scripted UI
//! client to an in-process [`Hub`]; messages travel through the hub as
//! serialized lines and are delivered in FIFO order with zero latency.
//! Given the same file the trace is byte-identical on every run.
//!
//! ```json
//! {
//!   "duration": 240,
//!   "tick_hz": 1,
//!   "session": "demo",
//!   "users": [
//!     {
//!       "id": "ana",
//!       "color": [255, 80, 40],
//!       "source": "synth:hr=68,breath=0.4,seed=1",
//!       "config": { "low_trigger": 600 },
//!       "timeline": [
//!         { "t": 20, "op": "grasp" },
//!         { "t": 20, "op": "set_pace", "value": 7.5 }
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! `tick_hz` defaults to 1, `session` to the hub default, and `config`
//! accepts any subset of the device configuration fields. Timeline ops are
//! `grasp`, `release` and `set_pace` (breaths per minute).

use std::collections::{BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use disimo_core::audio::{synthesize_guide, write_wav};
use disimo_core::cluster::SessionSnapshot;
use disimo_core::device::{Action, DeviceConfig, TraceEntry};
use disimo_core::Rgb;
use serde::{Deserialize, Serialize};

use crate::host::{DeviceHost, HeartSource, HostOutput};
use crate::hub::{ConnId, Delivery, Hub, JournalEntry};
use crate::wire::{ControlOp, WireMessage};
use crate::{Result, ServiceError};

fn default_tick_hz() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub duration: f64,
    #[serde(default = "default_tick_hz")]
    pub tick_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
    #[serde(default)]
    pub users: Vec<UserSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub id: String,
    pub color: Rgb,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<DeviceConfig>,
    #[serde(default)]
    pub timeline: Vec<TimelineEvent>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineEvent {
    pub t: f64,
    pub op: ControlOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl Scenario {
    /// Parses and validates. Errors read `NAME:LINE:COL: ...` for syntax and
    /// schema problems and `NAME: field.path: ...` for semantic ones.
    pub fn from_json(text: &str, name: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text)
            .map_err(|e| ServiceError::BadInput(format!("{name}:{}:{}: {e}", e.line(), e.column())))?;
        sc.validate().map_err(|msg| ServiceError::BadInput(format!("{name}: {msg}")))?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::BadInput(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(format!("duration: {} must be a positive number of seconds", self.duration));
        }
        if !(self.tick_hz.is_finite() && self.tick_hz > 0.0) {
            return Err(format!("tick_hz: {} must be positive", self.tick_hz));
        }
        let mut ids = BTreeSet::new();
        for (i, u) in self.users.iter().enumerate() {
            if u.id.is_empty() {
                return Err(format!("users[{i}].id: must not be empty"));
            }
            if !ids.insert(u.id.as_str()) {
                return Err(format!("users[{i}].id: duplicate id `{}`", u.id));
            }
            HeartSource::parse(&u.source).map_err(|e| format!("users[{i}].source: {e}"))?;
            if let Some(cfg) = &u.config {
                cfg.validate().map_err(|e| format!("users[{i}].config: {e}"))?;
            }
            for (j, ev) in u.timeline.iter().enumerate() {
                if !(ev.t.is_finite() && (0.0..=self.duration).contains(&ev.t)) {
                    return Err(format!("users[{i}].timeline[{j}].t: {} is outside [0, {}]", ev.t, self.duration));
                }
                if ev.op == ControlOp::SetPace && !ev.value.is_some_and(|v| v.is_finite() && v > 0.0) {
                    return Err(format!("users[{i}].timeline[{j}].value: set_pace needs breaths per minute > 0"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Simulated seconds per wall-clock second; `f64::INFINITY` runs flat out.
    pub accelerate: f64,
    /// Write each reminded or grasped user's guide as `<id>.wav` here.
    pub wav_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { accelerate: f64::INFINITY, wav_dir: None }
    }
}

#[derive(Debug, Serialize)]
struct MessageRecord<'a> {
    t: f64,
    from: &'a str,
    to: &'a str,
    msg: &'a WireMessage,
}

#[derive(Debug, Serialize)]
struct ActionRecord<'a> {
    device: &'a str,
    #[serde(flatten)]
    entry: &'a TraceEntry,
}

#[derive(Debug, Default)]
pub struct ScenarioOutcome {
    /// Newline-delimited JSON trace, one record per line (no trailing
    /// newlines inside).
    pub trace: Vec<String>,
    /// Every snapshot the hub broadcast, with its simulated time.
    pub snapshots: Vec<(f64, SessionSnapshot)>,
    /// UI grasps as `(t, device)`.
    pub grasps: Vec<(f64, String)>,
    pub wav_files: Vec<PathBuf>,
}

impl ScenarioOutcome {
    pub fn trace_text(&self) -> String {
        let mut s = String::new();
        for l in &self.trace {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    pub fn final_snapshot(&self) -> Option<SessionSnapshot> {
        self.snapshots.last().map(|(_, s)| *s)
    }
}

const UI: &str = "ui";
const HUB: &str = "hub";

struct Sim {
    hub: Hub,
    hosts: Vec<DeviceHost>,
    conns: Vec<ConnId>,
    ui: ConnId,
    out: ScenarioOutcome,
    journal_seen: usize,
    audio_users: BTreeSet<usize>,
}

impl Sim {
    fn name_of(&self, conn: ConnId) -> &str {
        if conn == self.ui {
            return UI;
        }
        self.conns
            .iter()
            .position(|c| *c == conn)
            .map(|i| self.hosts[i].id())
            .unwrap_or("?")
    }

    fn push_json(&mut self, v: &impl Serialize) {
        self.out.trace.push(serde_json::to_string(v).expect("trace records serialize"));
    }

    fn record_action(&mut self, idx: usize, entry: &TraceEntry) {
        if matches!(entry.action(), Some(Action::StartAudio { .. })) {
            self.audio_users.insert(idx);
        }
        let rec = ActionRecord { device: self.hosts[idx].id(), entry };
        let line = serde_json::to_string(&rec).expect("trace records serialize");
        self.out.trace.push(line);
    }

    /// Sends `msg` from `from` into the hub and delivers everything that
    /// follows until the system is quiet again.
    fn pump(&mut self, t: f64, from: ConnId, msg: WireMessage) -> Result<()> {
        let mut queue = VecDeque::from([(from, msg)]);
        while let Some((conn, msg)) = queue.pop_front() {
            let from_name = self.name_of(conn).to_string();
            self.push_json(&MessageRecord { t, from: &from_name, to: HUB, msg: &msg });
            let deliveries = self.hub.receive(conn, &msg.to_json());
            let fresh: Vec<SessionSnapshot> = self.hub.journal()[self.journal_seen..]
                .iter()
                .filter_map(|e| match e {
                    JournalEntry::Broadcast { snapshot, .. } => Some(*snapshot),
                    _ => None,
                })
                .collect();
            self.journal_seen = self.hub.journal().len();
            self.out.snapshots.extend(fresh.into_iter().map(|s| (t, s)));

            for d in deliveries {
                let Delivery::Send(to, reply) = d else { continue };
                let to_name = self.name_of(to).to_string();
                self.push_json(&MessageRecord { t, from: HUB, to: &to_name, msg: &reply });
                if let Some(idx) = self.conns.iter().position(|c| *c == to) {
                    let outputs = self.hosts[idx].on_message(t, &reply)?;
                    for o in outputs {
                        match o {
                            HostOutput::Wire(m) => queue.push_back((to, m)),
                            HostOutput::Trace(e) => self.record_action(idx, &e),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn host_outputs(&mut self, t: f64, idx: usize, outputs: Vec<HostOutput>) -> Result<()> {
        for o in outputs {
            match o {
                HostOutput::Wire(m) => self.pump(t, self.conns[idx], m)?,
                HostOutput::Trace(e) => self.record_action(idx, &e),
            }
        }
        Ok(())
    }
}

enum Agenda {
    Tick,
    Control { user: usize, op: ControlOp, value: Option<f64> },
}

pub fn run(sc: &Scenario, opts: &RunOptions) -> Result<ScenarioOutcome> {
    if opts.accelerate.is_nan() || opts.accelerate < 1.0 {
        return Err(ServiceError::BadInput(format!("accelerate {} must be >= 1", opts.accelerate)));
    }
    sc.validate().map_err(ServiceError::BadInput)?;
    if sc.users.is_empty() {
        return Ok(ScenarioOutcome::default());
    }

    let mut hub = Hub::with_journal();
    let mut hosts = Vec::with_capacity(sc.users.len());
    let mut conns = Vec::with_capacity(sc.users.len());
    for u in &sc.users {
        let mut cfg = u.config.unwrap_or_default();
        cfg.user_color = u.color;
        hosts.push(DeviceHost::new(&u.id, cfg, HeartSource::parse(&u.source)?)?);
        conns.push(hub.connect());
    }
    let ui = hub.connect();
    let mut sim = Sim { hub, hosts, conns, ui, out: ScenarioOutcome::default(), journal_seen: 0, audio_users: BTreeSet::new() };

    let mut agenda: Vec<(f64, u8, usize, Agenda)> = Vec::new();
    let ticks = (sc.duration * sc.tick_hz + 1e-9).floor() as u64;
    for k in 0..=ticks {
        agenda.push((k as f64 / sc.tick_hz, 0, 0, Agenda::Tick));
    }
    let mut seq = 0;
    for (user, u) in sc.users.iter().enumerate() {
        for ev in &u.timeline {
            seq += 1;
            agenda.push((ev.t, 1, seq, Agenda::Control { user, op: ev.op, value: ev.value }));
        }
    }
    agenda.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    for idx in 0..sim.hosts.len() {
        let hello = sim.hosts[idx].hello(sc.session.clone());
        sim.pump(0.0, sim.conns[idx], hello)?;
    }

    let wall_start = Instant::now();
    for (t, _, _, item) in agenda {
        if opts.accelerate.is_finite() {
            let due = Duration::from_secs_f64(t / opts.accelerate);
            if let Some(wait) = due.checked_sub(wall_start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        match item {
            Agenda::Tick => {
                for idx in 0..sim.hosts.len() {
                    let outputs = sim.hosts[idx].tick(t)?;
                    sim.host_outputs(t, idx, outputs)?;
                }
            }
            Agenda::Control { user, op, value } => {
                let device = sc.users[user].id.clone();
                if op == ControlOp::Grasp {
                    sim.out.grasps.push((t, device.clone()));
                }
                sim.pump(t, sim.ui, WireMessage::Control { device, op, value })?;
            }
        }
    }

    if let Some(dir) = &opts.wav_dir {
        std::fs::create_dir_all(dir)?;
        for &idx in &sim.audio_users {
            let host = &sim.hosts[idx];
            let spec = host.runner().config().guide_spec();
            let path = dir.join(format!("{}.wav", host.id()));
            write_wav(&synthesize_guide(&spec)?, spec.sample_rate, &path)?;
            sim.out.wav_files.push(path);
        }
    }
    Ok(sim.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
        "duration": 60,
        "users": [
            {"id": "a", "color": [255, 0, 0], "source": "synth:breath=0.4,seed=1",
             "timeline": [{"t": 5, "op": "grasp"}, {"t": 5, "op": "set_pace", "value": 7.5}]},
            {"id": "b", "color": [0, 0, 255], "source": "synth:breath=0.4,seed=2"}
        ]
    }"#;

    #[test]
    fn zero_users_is_empty() {
        let sc = Scenario::from_json(r#"{"duration": 10, "users": []}"#, "z").unwrap();
        let out = run(&sc, &RunOptions::default()).unwrap();
        assert!(out.trace.is_empty());
    }

    #[test]
    fn small_session_runs_and_repeats() {
        let sc = Scenario::from_json(SMALL, "small").unwrap();
        let a = run(&sc, &RunOptions::default()).unwrap();
        let b = run(&sc, &RunOptions::default()).unwrap();
        assert_eq!(a.trace_text(), b.trace_text());
        assert_eq!(a.grasps, vec![(5.0, "a".to_string())]);
        // b was invited when a went active
        assert!(a.trace.iter().any(|l| l.contains(r#""device":"b""#) && l.contains("pulse_light")));
        assert_eq!(a.final_snapshot().unwrap().brightness, 1.0);
    }

    #[test]
    fn schema_errors_carry_location() {
        let e = Scenario::from_json("{\n  \"duration\": 10,\n  \"users\": 3\n}", "f.json").unwrap_err();
        assert!(e.to_string().starts_with("f.json:3:"), "{e}");
        let e = Scenario::from_json(r#"{"duration": 10, "bogus": 1}"#, "f.json").unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let bad_t = r#"{"duration": 10, "users": [{"id": "a", "color": [1,2,3], "source": "synth", "timeline": [{"t": 11, "op": "grasp"}]}]}"#;
        let e = Scenario::from_json(bad_t, "f.json").unwrap_err();
        assert!(e.to_string().contains("users[0].timeline[0].t"), "{e}");
        let dup = r#"{"duration": 10, "users": [{"id": "a", "color": [1,2,3], "source": "synth"}, {"id": "a", "color": [1,2,3], "source": "synth"}]}"#;
        assert!(Scenario::from_json(dup, "f").unwrap_err().to_string().contains("users[1].id"));
        let src = r#"{"duration": 10, "users": [{"id": "a", "color": [1,2,3], "source": "magic"}]}"#;
        assert!(Scenario::from_json(src, "f").unwrap_err().to_string().contains("users[0].source"));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn wav_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let sc = Scenario::from_json(SMALL, "small").unwrap();
        let out = run(&sc, &RunOptions { wav_dir: Some(dir.path().into()), ..Default::default() }).unwrap();
        assert_eq!(out.wav_files, vec![dir.path().join("a.wav")]);
        assert!(out.wav_files[0].metadata().unwrap().len() > 44);
    }
}
