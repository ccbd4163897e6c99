//! Heart-rate variability from beat timestamps.
//!
//! Every beat after the first closes an RR interval and yields an
//! instantaneous heart rate sample `60 / RR` stamped at the closing beat.
//! HRV is the range (max − min) of those samples inside a half-open window
//! `(t − W, t]`, with `W` defaulting to 15 s.

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_WINDOW_S: f64 = 15.0;
/// Ranges strictly below this are `Low`.
pub const HRV_LOW_BPM: f64 = 2.0;
/// Ranges strictly above this are `High`.
pub const HRV_HIGH_BPM: f64 = 5.0;
/// RR intervals outside `[RR_MIN_S, RR_MAX_S]` are treated as artifacts.
pub const RR_MIN_S: f64 = 0.25;
pub const RR_MAX_S: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatEvent {
    pub t: f64,
}

impl BeatEvent {
    pub fn at(t: f64) -> Self {
        BeatEvent { t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrSample {
    pub t: f64,
    /// Beats per minute.
    pub hr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvSample {
    pub t: f64,
    /// Beats per minute. Meaningless when `defined` is false.
    pub range: f64,
    pub defined: bool,
}

impl HrvSample {
    pub fn undefined(t: f64) -> Self {
        HrvSample { t, range: 0.0, defined: false }
    }

    pub fn with_range(t: f64, range: f64) -> Self {
        HrvSample { t, range, defined: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HrvClass {
    Low,
    Mid,
    High,
}

impl HrvClass {
    /// Both thresholds are strict, so exactly 2 and exactly 5 bpm are `Mid`.
    pub fn from_range(range: f64) -> Self {
        if range < HRV_LOW_BPM {
            HrvClass::Low
        } else if range > HRV_HIGH_BPM {
            HrvClass::High
        } else {
            HrvClass::Mid
        }
    }
}

pub fn instantaneous_hr(prev: BeatEvent, beat: BeatEvent) -> Result<HrSample> {
    let rr = beat.t - prev.t;
    if !(rr.is_finite() && rr > 0.0) {
        return Err(Error::invalid(format!(
            "beat at t={} does not follow beat at t={}",
            beat.t, prev.t
        )));
    }
    Ok(HrSample { t: beat.t, hr: 60.0 / rr })
}

/// Range of HR over `(t − window, t]`. `samples` must be sorted by time.
pub fn hrv_range(samples: &[HrSample], t: f64, window: f64) -> HrvSample {
    let lo = samples.partition_point(|s| s.t <= t - window);
    let hi = samples.partition_point(|s| s.t <= t);
    let slice = &samples[lo..hi.max(lo)];
    if slice.len() < 2 {
        return HrvSample::undefined(t);
    }
    let (min, max) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), s| {
        (mn.min(s.hr), mx.max(s.hr))
    });
    HrvSample::with_range(t, max - min)
}

pub fn classify(h: &HrvSample) -> Result<HrvClass> {
    if !h.defined {
        return Err(Error::invalid(format!("HRV at t={} is undefined", h.t)));
    }
    Ok(HrvClass::from_range(h.range))
}

/// Incremental version of [`hrv_range`] for streaming use.
///
/// Samples must be pushed in time order and queries must not go back in
/// time or ask about a moment earlier than the newest pushed sample.
/// Max and min are tracked with monotonic deques, so each push and query is
/// amortized O(1).
#[derive(Debug, Clone)]
pub struct HrvWindow {
    window: f64,
    live: VecDeque<HrSample>,
    maxq: VecDeque<HrSample>,
    minq: VecDeque<HrSample>,
}

impl Default for HrvWindow {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW_S)
    }
}

impl HrvWindow {
    pub fn new(window: f64) -> Self {
        assert!(window > 0.0, "window must be positive");
        HrvWindow {
            window,
            live: VecDeque::new(),
            maxq: VecDeque::new(),
            minq: VecDeque::new(),
        }
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn push(&mut self, s: HrSample) {
        while self.maxq.back().is_some_and(|b| b.hr <= s.hr) {
            self.maxq.pop_back();
        }
        self.maxq.push_back(s);
        while self.minq.back().is_some_and(|b| b.hr >= s.hr) {
            self.minq.pop_back();
        }
        self.minq.push_back(s);
        self.live.push_back(s);
    }

    pub fn sample_at(&mut self, t: f64) -> HrvSample {
        let w = self.window;
        let expired = |s: &HrSample| s.t <= t - w;
        while self.live.front().is_some_and(expired) {
            self.live.pop_front();
        }
        while self.maxq.front().is_some_and(expired) {
            self.maxq.pop_front();
        }
        while self.minq.front().is_some_and(expired) {
            self.minq.pop_front();
        }
        debug_assert!(self.live.back().is_none_or(|s| s.t <= t));
        match (self.live.len(), self.maxq.front(), self.minq.front()) {
            (n, Some(mx), Some(mn)) if n >= 2 => HrvSample::with_range(t, mx.hr - mn.hr),
            _ => HrvSample::undefined(t),
        }
    }

    pub fn clear(&mut self) {
        self.live.clear();
        self.maxq.clear();
        self.minq.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ingest {
    /// First beat of the stream; nothing to measure yet.
    Anchor,
    Sample(HrSample),
    /// RR interval outside the plausible band. Short intervals drop the beat
    /// and keep the previous anchor; long ones re-anchor on the new beat.
    Rejected { t: f64, rr: f64 },
}

/// Turns raw beats into HR samples, filtering implausible RR intervals.
#[derive(Debug, Clone, Default)]
pub struct BeatIngester {
    prev: Option<BeatEvent>,
}

impl BeatIngester {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, beat: BeatEvent) -> Result<Ingest> {
        let Some(prev) = self.prev else {
            self.prev = Some(beat);
            return Ok(Ingest::Anchor);
        };
        let sample = instantaneous_hr(prev, beat)?;
        let rr = beat.t - prev.t;
        if rr < RR_MIN_S {
            log::warn!("dropping ectopic beat at t={:.3}: RR {:.3}s", beat.t, rr);
            return Ok(Ingest::Rejected { t: beat.t, rr });
        }
        self.prev = Some(beat);
        if rr > RR_MAX_S {
            log::warn!("RR gap of {:.3}s ending at t={:.3}, re-anchoring", rr, beat.t);
            return Ok(Ingest::Rejected { t: beat.t, rr });
        }
        Ok(Ingest::Sample(sample))
    }
}

/// Computes HR samples for a whole stream, skipping rejected intervals.
pub fn hr_series(beats: &[BeatEvent]) -> Result<Vec<HrSample>> {
    let mut ing = BeatIngester::new();
    let mut out = Vec::with_capacity(beats.len());
    for &b in beats {
        if let Ingest::Sample(s) = ing.push(b)? {
            out.push(s);
        }
    }
    Ok(out)
}

/// Reads the RR replay format: one beat timestamp (seconds) per line,
/// strictly increasing. Blank lines and `#` comments are ignored.
pub fn parse_rr_stream(reader: impl BufRead, source: &str) -> Result<Vec<BeatEvent>> {
    let mut beats: Vec<BeatEvent> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { path: source.to_string(), line: idx + 1, msg };
        let t: f64 = text.parse().map_err(|_| err(format!("`{text}` is not a timestamp")))?;
        if !t.is_finite() || t < 0.0 {
            return Err(err(format!("timestamp {t} must be finite and non-negative")));
        }
        if let Some(last) = beats.last() {
            if t <= last.t {
                return Err(err(format!("timestamp {t} does not exceed previous {}", last.t)));
            }
        }
        beats.push(BeatEvent { t });
    }
    Ok(beats)
}

pub fn read_rr_file(path: impl AsRef<Path>) -> Result<Vec<BeatEvent>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path)?;
    parse_rr_stream(std::io::BufReader::new(f), &path.display().to_string())
}

pub fn write_rr_stream(beats: &[BeatEvent], mut w: impl Write) -> Result<()> {
    writeln!(w, "# beat timestamps, seconds")?;
    for b in beats {
        writeln!(w, "{}", b.t)?;
    }
    Ok(())
}
