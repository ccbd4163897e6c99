//! The device controller.
//!
//! [`step`] is a pure transition function over [`DeviceState`]: it takes one
//! timestamped [`DeviceEvent`] and returns the next state together with the
//! actuator [`Action`]s to perform. Time only advances through events, so
//! timers (the low-HRV trigger, the end of an unattended guide, the snooze)
//! are evaluated lazily against the timestamp of whatever event arrives
//! next. Callers are expected to feed ticks at 1 Hz or faster.
//!
//! Modes:
//!
//! ```text
//!   Idle ──low HRV for low_trigger──▶ Reminding ──guide elapsed──▶ Snoozed
//!    ▲  ◀────────────── HRV improved / snooze over, not low ─────────┘ │
//!    │                       ▲──────────── snooze over, still low ─────┘
//!    │ release
//!   Active ◀──────── grasp (from Idle, Reminding or Snoozed)
//!    ▲ │ HRV high
//!    │ ▼
//!   Coherent
//! ```

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::audio::{GuideSpec, CYCLE_S, DEFAULT_CYCLES, DEFAULT_PEAK_GAIN};
use crate::cluster::SessionSnapshot;
use crate::hrv::{BeatEvent, BeatIngester, HrvClass, HrvSample, HrvWindow, Ingest, DEFAULT_WINDOW_S};
use crate::{Error, Result, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceConfig {
    pub low_trigger: f64,
    pub guide_cycles: u32,
    pub guide_gain: f64,
    pub snooze: f64,
    pub fade: f64,
    pub user_color: Rgb,
    pub hrv_window: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            low_trigger: 600.0,
            guide_cycles: DEFAULT_CYCLES,
            guide_gain: DEFAULT_PEAK_GAIN,
            snooze: 60.0,
            fade: 2.0,
            user_color: Rgb::new(255, 255, 255),
            hrv_window: DEFAULT_WINDOW_S,
        }
    }
}

impl DeviceConfig {
    pub fn with_color(color: Rgb) -> Self {
        DeviceConfig { user_color: color, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let durations = [self.low_trigger, self.snooze, self.fade, self.hrv_window];
        if durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) || self.guide_cycles == 0 {
            return Err(Error::invalid("device durations and guide_cycles must be positive"));
        }
        if !(0.0..=1.0).contains(&self.guide_gain) {
            return Err(Error::invalid("guide_gain must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn guide_duration(&self) -> f64 {
        self.guide_cycles as f64 * CYCLE_S
    }

    pub fn guide_spec(&self) -> GuideSpec {
        GuideSpec { cycles: self.guide_cycles, peak_gain: self.guide_gain, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Reminding,
    Snoozed,
    Active,
    Coherent,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Idle, Mode::Reminding, Mode::Snoozed, Mode::Active, Mode::Coherent];

    pub fn is_grasped(self) -> bool {
        matches!(self, Mode::Active | Mode::Coherent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub mode: Mode,
    /// Start of the current uninterrupted run of low-HRV samples.
    pub low_since: Option<f64>,
    pub mode_entered: f64,
    /// Class of the latest HRV sample, `None` if it was undefined.
    pub latest_class: Option<HrvClass>,
    pub last_t: Option<f64>,
}

impl Default for DeviceState {
    fn default() -> Self {
        DeviceState { mode: Mode::Idle, low_since: None, mode_entered: 0.0, latest_class: None, last_t: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DeviceEvent {
    Tick { t: f64 },
    Hrv { t: f64, sample: HrvSample, class: Option<HrvClass> },
    Grasp { t: f64 },
    Release { t: f64 },
    Snapshot { t: f64, snapshot: SessionSnapshot },
    Invite { t: f64 },
}

impl DeviceEvent {
    pub fn hrv(sample: HrvSample) -> Self {
        let class = sample.defined.then(|| HrvClass::from_range(sample.range));
        DeviceEvent::Hrv { t: sample.t, sample, class }
    }

    pub fn t(&self) -> f64 {
        match *self {
            DeviceEvent::Tick { t }
            | DeviceEvent::Hrv { t, .. }
            | DeviceEvent::Grasp { t }
            | DeviceEvent::Release { t }
            | DeviceEvent::Snapshot { t, .. }
            | DeviceEvent::Invite { t } => t,
        }
    }

    /// Tie-break order for events sharing a timestamp.
    pub fn kind_rank(&self) -> u8 {
        match self {
            DeviceEvent::Tick { .. } => 0,
            DeviceEvent::Hrv { .. } => 1,
            DeviceEvent::Grasp { .. } => 2,
            DeviceEvent::Release { .. } => 3,
            DeviceEvent::Snapshot { .. } => 4,
            DeviceEvent::Invite { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    StartAudio { cycles: u32, duration: f64 },
    FadeAudio { fade_s: f64 },
    StopAudio,
    SetLight { color: Rgb, brightness: f64 },
    PulseLight,
    FanOn,
    FanOff,
    PublishStatus { active: bool, coherent: bool },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::StartAudio { .. } => "start_audio",
            Action::FadeAudio { .. } => "fade_audio",
            Action::StopAudio => "stop_audio",
            Action::SetLight { .. } => "set_light",
            Action::PulseLight => "pulse_light",
            Action::FanOn => "fan_on",
            Action::FanOff => "fan_off",
            Action::PublishStatus { .. } => "publish_status",
        }
    }
}

fn start_audio(cfg: &DeviceConfig) -> Action {
    Action::StartAudio { cycles: cfg.guide_cycles, duration: cfg.guide_duration() }
}

fn enter(s: &mut DeviceState, mode: Mode, t: f64) {
    s.mode = mode;
    s.mode_entered = t;
}

fn is_low(s: &DeviceState) -> bool {
    s.latest_class == Some(HrvClass::Low)
}

fn expire_timers(s: &mut DeviceState, t: f64, cfg: &DeviceConfig, out: &mut Vec<Action>) {
    match s.mode {
        Mode::Idle => {
            if let Some(since) = s.low_since {
                if is_low(s) && t - since >= cfg.low_trigger {
                    enter(s, Mode::Reminding, t);
                    s.low_since = None;
                    out.push(start_audio(cfg));
                }
            }
        }
        Mode::Reminding => {
            if t - s.mode_entered >= cfg.guide_duration() {
                enter(s, Mode::Snoozed, t);
                s.low_since = is_low(s).then_some(t);
                out.push(Action::StopAudio);
            }
        }
        Mode::Snoozed => {
            if t - s.mode_entered >= cfg.snooze {
                s.low_since = None;
                if is_low(s) {
                    enter(s, Mode::Reminding, t);
                    out.push(start_audio(cfg));
                } else {
                    enter(s, Mode::Idle, t);
                }
            }
        }
        Mode::Active | Mode::Coherent => {}
    }
}

/// Applies one event. Pure: the same inputs always give the same outputs.
pub fn step(state: &DeviceState, event: &DeviceEvent, cfg: &DeviceConfig) -> Result<(DeviceState, Vec<Action>)> {
    let t = event.t();
    if !t.is_finite() {
        return Err(Error::invalid("event timestamp must be finite"));
    }
    if let Some(last) = state.last_t {
        if t < last {
            return Err(Error::OutOfOrder { last, got: t });
        }
    }
    let mut s = *state;
    s.last_t = Some(t);
    let mut out = Vec::new();
    expire_timers(&mut s, t, cfg, &mut out);

    match *event {
        DeviceEvent::Tick { .. } => {}
        DeviceEvent::Hrv { class: None, .. } => {
            // no data is not stress: drop any running low timer
            s.latest_class = None;
            s.low_since = None;
        }
        DeviceEvent::Hrv { class: Some(class), .. } => {
            s.latest_class = Some(class);
            match s.mode {
                Mode::Idle if class == HrvClass::Low => {
                    s.low_since.get_or_insert(t);
                    expire_timers(&mut s, t, cfg, &mut out);
                }
                Mode::Idle => s.low_since = None,
                Mode::Snoozed if class == HrvClass::Low => {
                    s.low_since.get_or_insert(t);
                }
                Mode::Snoozed => {
                    s.low_since = None;
                    enter(&mut s, Mode::Idle, t);
                }
                Mode::Reminding => {}
                Mode::Active if class == HrvClass::High => {
                    enter(&mut s, Mode::Coherent, t);
                    out.push(Action::FanOn);
                    out.push(Action::PublishStatus { active: true, coherent: true });
                }
                Mode::Active => {}
                Mode::Coherent if class < HrvClass::High => {
                    enter(&mut s, Mode::Active, t);
                    out.push(Action::FanOff);
                    out.push(Action::PublishStatus { active: true, coherent: false });
                }
                Mode::Coherent => {}
            }
        }
        DeviceEvent::Grasp { .. } if !s.mode.is_grasped() => {
            if s.mode == Mode::Reminding {
                out.push(Action::FadeAudio { fade_s: cfg.fade });
            }
            enter(&mut s, Mode::Active, t);
            s.low_since = None;
            out.push(start_audio(cfg));
            out.push(Action::SetLight { color: cfg.user_color, brightness: 1.0 });
            out.push(Action::PublishStatus { active: true, coherent: false });
        }
        DeviceEvent::Grasp { .. } => {}
        DeviceEvent::Release { .. } if s.mode.is_grasped() => {
            if s.mode == Mode::Coherent {
                out.push(Action::FanOff);
            }
            enter(&mut s, Mode::Idle, t);
            s.low_since = is_low(&s).then_some(t);
            out.push(Action::StopAudio);
            out.push(Action::SetLight { color: Rgb::BLACK, brightness: 0.0 });
            out.push(Action::PublishStatus { active: false, coherent: false });
        }
        DeviceEvent::Release { .. } => {}
        DeviceEvent::Snapshot { snapshot, .. } if s.mode.is_grasped() => {
            out.push(Action::SetLight { color: snapshot.color, brightness: snapshot.brightness });
        }
        DeviceEvent::Snapshot { .. } => {}
        DeviceEvent::Invite { .. } if s.mode == Mode::Idle => out.push(Action::PulseLight),
        DeviceEvent::Invite { .. } => {}
    }
    Ok((s, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceEntry {
    Action {
        t: f64,
        #[serde(flatten)]
        action: Action,
    },
    Warning {
        t: f64,
        warning: String,
        rr: f64,
    },
}

impl TraceEntry {
    pub fn t(&self) -> f64 {
        match self {
            TraceEntry::Action { t, .. } | TraceEntry::Warning { t, .. } => *t,
        }
    }

    pub fn action(&self) -> Option<&Action> {
        match self {
            TraceEntry::Action { action, .. } => Some(action),
            TraceEntry::Warning { .. } => None,
        }
    }
}

pub fn write_trace(trace: &[TraceEntry], mut w: impl Write) -> Result<()> {
    for e in trace {
        serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Beats-to-actions pipeline for one device: ingest, window, classify, step.
#[derive(Debug, Clone)]
pub struct DeviceRunner {
    config: DeviceConfig,
    state: DeviceState,
    ingester: BeatIngester,
    window: HrvWindow,
    latest_hrv: Option<HrvSample>,
}

impl DeviceRunner {
    pub fn new(config: DeviceConfig) -> Result<Self> {
        config.validate()?;
        Ok(DeviceRunner {
            config,
            state: DeviceState::default(),
            ingester: BeatIngester::new(),
            window: HrvWindow::new(config.hrv_window),
            latest_hrv: None,
        })
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn state(&self) -> &DeviceState {
        &self.state
    }

    pub fn latest_hrv(&self) -> Option<HrvSample> {
        self.latest_hrv
    }

    pub fn apply(&mut self, event: &DeviceEvent) -> Result<Vec<TraceEntry>> {
        let (next, actions) = step(&self.state, event, &self.config)?;
        self.state = next;
        let t = event.t();
        Ok(actions.into_iter().map(|action| TraceEntry::Action { t, action }).collect())
    }

    /// Feeds one beat. A beat that closes a plausible RR interval produces an
    /// HRV update for the device; rejected intervals produce a warning.
    pub fn push_beat(&mut self, beat: BeatEvent) -> Result<Vec<TraceEntry>> {
        if let Some(last) = self.state.last_t {
            if beat.t < last {
                return Err(Error::OutOfOrder { last, got: beat.t });
            }
        }
        match self.ingester.push(beat)? {
            Ingest::Anchor => Ok(Vec::new()),
            Ingest::Rejected { t, rr } => Ok(vec![TraceEntry::Warning { t, warning: "rejected_rr".into(), rr }]),
            Ingest::Sample(s) => {
                self.window.push(s);
                let hrv = self.window.sample_at(s.t);
                self.latest_hrv = Some(hrv);
                self.apply(&DeviceEvent::hrv(hrv))
            }
        }
    }
}

/// Merges a beat stream and an event stream by timestamp (ties broken by
/// [`DeviceEvent::kind_rank`], beats ranking as HRV updates) and folds them
/// through a fresh [`DeviceRunner`].
pub fn run_device(beats: &[BeatEvent], events: &[DeviceEvent], config: &DeviceConfig) -> Result<Vec<TraceEntry>> {
    enum Item<'a> {
        Beat(BeatEvent),
        Event(&'a DeviceEvent),
    }
    let hrv_rank = DeviceEvent::Tick { t: 0.0 }.kind_rank() + 1;
    let mut items: Vec<(f64, u8, Item)> = beats
        .iter()
        .map(|&b| (b.t, hrv_rank, Item::Beat(b)))
        .chain(events.iter().map(|e| (e.t(), e.kind_rank(), Item::Event(e))))
        .collect();
    // stable, so equal (t, rank) keep their input order
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut runner = DeviceRunner::new(*config)?;
    let mut trace = Vec::new();
    for (_, _, item) in items {
        let entries = match item {
            Item::Beat(b) => runner.push_beat(b)?,
            Item::Event(e) => runner.apply(e)?,
        };
        trace.extend(entries);
    }
    Ok(trace)
}
