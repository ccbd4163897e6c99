//! Device host: one simulated Dišimo attached to a hub.
//!
//! [`DeviceHost`] is the synchronous core. It pulls beats from a
//! [`HeartSource`], runs them through the device pipeline, turns
//! `PublishStatus` actions into `status` messages and turns incoming
//! `snapshot`, `invite` and `control` messages into device events. The
//! async [`run_networked`] wraps it with a TCP connection and a tick clock.

use std::time::Duration;

use disimo_core::device::{Action, DeviceConfig, DeviceEvent, DeviceRunner, TraceEntry};
use disimo_core::heartsim::{coupling_for_pace, BeatGenerator, HeartModel};
use disimo_core::hrv::{read_rr_file, BeatEvent};
use disimo_core::Rgb;
use serde::Serialize;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

use crate::wire::{parse_line, ControlOp, WireMessage};
use crate::{Result, ServiceError};

#[derive(Debug, Clone)]
pub enum HeartSource {
    Synth(Box<BeatGenerator>),
    Replay { beats: Vec<BeatEvent>, next: usize },
}

impl HeartSource {
    /// `synth:hr=70,breath=0.125,coupling=6,seed=1` or `file:PATH` (RR replay).
    pub fn parse(desc: &str) -> Result<Self> {
        if let Some(path) = desc.strip_prefix("file:") {
            return Ok(HeartSource::Replay { beats: read_rr_file(path)?, next: 0 });
        }
        Ok(HeartSource::Synth(Box::new(BeatGenerator::new(HeartModel::from_descriptor(desc)?))))
    }

    pub fn synth(model: HeartModel) -> Self {
        HeartSource::Synth(Box::new(BeatGenerator::new(model)))
    }

    pub fn advance_to(&mut self, t: f64) -> Vec<BeatEvent> {
        match self {
            HeartSource::Synth(g) => g.advance_to(t),
            HeartSource::Replay { beats, next } => {
                let start = *next;
                while *next < beats.len() && beats[*next].t <= t {
                    *next += 1;
                }
                beats[start..*next].to_vec()
            }
        }
    }

    /// Switches the simulated breathing rate. RSA amplitude follows the
    /// pace tuning curve.
    pub fn set_pace(&mut self, breaths_per_min: f64) {
        match self {
            HeartSource::Synth(g) => {
                let f = breaths_per_min / 60.0;
                g.retune(f, coupling_for_pace(f));
            }
            HeartSource::Replay { .. } => log::warn!("set_pace ignored for a replayed beat stream"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum HostOutput {
    Wire(WireMessage),
    Trace(TraceEntry),
}

pub struct DeviceHost {
    id: String,
    runner: DeviceRunner,
    source: HeartSource,
    now: f64,
}

impl DeviceHost {
    pub fn new(id: impl Into<String>, config: DeviceConfig, source: HeartSource) -> Result<Self> {
        Ok(DeviceHost { id: id.into(), runner: DeviceRunner::new(config)?, source, now: 0.0 })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn color(&self) -> Rgb {
        self.runner.config().user_color
    }

    pub fn runner(&self) -> &DeviceRunner {
        &self.runner
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn hello(&self, session: Option<String>) -> WireMessage {
        WireMessage::Hello { device: self.id.clone(), color: self.color(), session }
    }

    pub fn bye(&self) -> WireMessage {
        WireMessage::Bye { device: self.id.clone() }
    }

    fn translate(&self, entries: Vec<TraceEntry>, out: &mut Vec<HostOutput>) {
        for e in entries {
            if let Some(Action::PublishStatus { active, coherent }) = e.action() {
                out.push(HostOutput::Trace(e.clone()));
                out.push(HostOutput::Wire(WireMessage::Status {
                    device: self.id.clone(),
                    active: *active,
                    coherent: *coherent,
                }));
            } else {
                out.push(HostOutput::Trace(e));
            }
        }
    }

    /// Processes every beat up to `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<Vec<HostOutput>> {
        let t = t.max(self.now);
        let mut out = Vec::new();
        for beat in self.source.advance_to(t) {
            let entries = self.runner.push_beat(beat)?;
            self.translate(entries, &mut out);
        }
        self.now = t;
        Ok(out)
    }

    pub fn tick(&mut self, t: f64) -> Result<Vec<HostOutput>> {
        let mut out = self.advance_to(t)?;
        let entries = self.runner.apply(&DeviceEvent::Tick { t: self.now })?;
        self.translate(entries, &mut out);
        Ok(out)
    }

    /// Handles a message from the hub arriving at simulated time `t`.
    pub fn on_message(&mut self, t: f64, msg: &WireMessage) -> Result<Vec<HostOutput>> {
        let mut out = self.advance_to(t)?;
        let t = self.now;
        let event = match msg {
            WireMessage::Snapshot { .. } => msg.as_snapshot().map(|snapshot| DeviceEvent::Snapshot { t, snapshot }),
            WireMessage::Invite {} => Some(DeviceEvent::Invite { t }),
            WireMessage::Control { device, op, value } if *device == self.id => match op {
                ControlOp::Grasp => Some(DeviceEvent::Grasp { t }),
                ControlOp::Release => Some(DeviceEvent::Release { t }),
                ControlOp::SetPace => {
                    if let Some(v) = value {
                        self.source.set_pace(*v);
                    }
                    None
                }
            },
            WireMessage::Error { code, msg } => {
                log::warn!("{}: hub error {code}: {msg}", self.id);
                None
            }
            _ => None,
        };
        if let Some(e) = event {
            let entries = self.runner.apply(&e)?;
            self.translate(entries, &mut out);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct NetworkOptions {
    pub hub: String,
    pub session: Option<String>,
    pub tick_hz: f64,
    /// Simulated seconds per wall-clock second.
    pub accelerate: f64,
    /// Stop after this many simulated seconds.
    pub duration: Option<f64>,
    pub connect_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions {
            hub: "127.0.0.1:7878".into(),
            session: None,
            tick_hz: 1.0,
            accelerate: 1.0,
            duration: None,
            connect_attempts: 5,
            initial_backoff: Duration::from_millis(200),
        }
    }
}

pub async fn connect_with_retry(addr: &str, attempts: u32, initial: Duration) -> Result<TcpStream> {
    let mut delay = initial;
    let mut last = None;
    for attempt in 1..=attempts.max(1) {
        match TcpStream::connect(addr).await {
            Ok(s) => return Ok(s),
            Err(e) => {
                log::warn!("connect to {addr} failed (attempt {attempt}/{attempts}): {e}");
                last = Some(e);
                if attempt < attempts {
                    tokio::time::sleep(delay).await;
                    delay = (delay * 2).min(Duration::from_secs(5));
                }
            }
        }
    }
    Err(ServiceError::Connect(format!(
        "hub {addr} unreachable: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Drives `host` against a hub over TCP. Trace entries are handed to
/// `on_trace` as they happen.
pub async fn run_networked(
    mut host: DeviceHost,
    opts: NetworkOptions,
    mut on_trace: impl FnMut(&TraceEntry),
) -> Result<()> {
    if !(opts.tick_hz > 0.0 && opts.accelerate >= 1.0) {
        return Err(ServiceError::BadInput("tick rate must be positive and accelerate >= 1".into()));
    }
    let stream = connect_with_retry(&opts.hub, opts.connect_attempts, opts.initial_backoff).await?;
    let _ = stream.set_nodelay(true);
    let (rd, mut wr) = stream.into_split();
    let mut lines = BufReader::new(rd).lines();

    let send = |msg: &WireMessage| msg.to_line();
    wr.write_all(send(&host.hello(opts.session.clone())).as_bytes()).await?;

    let start = tokio::time::Instant::now();
    let sim_now = |start: tokio::time::Instant| start.elapsed().as_secs_f64() * opts.accelerate;
    let period = Duration::from_secs_f64(1.0 / (opts.tick_hz * opts.accelerate));
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Burst);
    let mut k: u64 = 0;

    loop {
        let outputs = tokio::select! {
            _ = ticker.tick() => {
                let t = k as f64 / opts.tick_hz;
                k += 1;
                if opts.duration.is_some_and(|d| t > d) {
                    break;
                }
                host.tick(t)?
            }
            line = lines.next_line() => {
                let Some(line) = line? else {
                    return Err(ServiceError::Connect("hub closed the connection".into()));
                };
                match parse_line(&line) {
                    Ok(WireMessage::Error { code, msg }) if code == "dup_id" => {
                        return Err(ServiceError::BadInput(format!("hub rejected id: {msg}")));
                    }
                    Ok(msg) => host.on_message(sim_now(start).min((k as f64) / opts.tick_hz), &msg)?,
                    Err(e) => {
                        log::warn!("ignoring unparseable line from hub: {}", e.to_json());
                        Vec::new()
                    }
                }
            }
        };
        for o in outputs {
            match o {
                HostOutput::Wire(m) => wr.write_all(send(&m).as_bytes()).await?,
                HostOutput::Trace(e) => on_trace(&e),
            }
        }
    }
    wr.write_all(send(&host.bye()).as_bytes()).await?;
    wr.shutdown().await?;
    Ok(())
}
