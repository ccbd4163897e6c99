//! Synthetic heart with respiratory sinus arrhythmia.
//!
//! Heart rate follows `hr_base + coupling · sin(2π · breath_freq · t + phase)`
//! plus a slow, seeded jitter walk. Beats are emitted by integrate-and-fire:
//! the integral of `hr/60` is accumulated in 1 ms steps and a beat fires
//! each time it crosses an integer.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::hrv::BeatEvent;
use crate::{Error, Result};

pub const INTEGRATION_STEP_S: f64 = 1e-3;
const JITTER_KNOT_S: f64 = 1.0;
const JITTER_RHO: f64 = 0.9;
const JITTER_CLAMP_SD: f64 = 4.0;
const MIN_HR_BPM: f64 = 20.0;
const MAX_HR_BPM: f64 = 240.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartModel {
    pub hr_base: f64,
    /// Breathing frequency in Hz.
    pub breath_freq: f64,
    /// Amplitude of the HR oscillation, bpm. Peak-to-peak swing is twice this.
    pub coupling: f64,
    pub phase: f64,
    pub seed: u64,
    /// Standard deviation of the jitter walk, bpm.
    pub jitter: f64,
}

impl Default for HeartModel {
    fn default() -> Self {
        HeartModel {
            hr_base: 70.0,
            breath_freq: 0.25,
            coupling: coupling_for_pace(0.25),
            phase: 0.0,
            seed: 0,
            jitter: 0.2,
        }
    }
}

/// RSA amplitude as a function of breathing rate: a triangle peaking at
/// 6 bpm for 0.1 Hz and falling linearly to a floor of 0.5 bpm at 0.4 Hz.
pub fn coupling_for_pace(breath_freq: f64) -> f64 {
    const PEAK_HZ: f64 = 0.1;
    const PEAK: f64 = 6.0;
    const FLOOR_HZ: f64 = 0.4;
    const FLOOR: f64 = 0.5;
    let slope = (PEAK - FLOOR) / (FLOOR_HZ - PEAK_HZ);
    (PEAK - slope * (breath_freq - PEAK_HZ).abs()).max(FLOOR)
}

impl HeartModel {
    /// A model breathing at `breath_freq` with the RSA amplitude given by
    /// [`coupling_for_pace`].
    pub fn paced(hr_base: f64, breath_freq: f64, seed: u64) -> Self {
        HeartModel {
            hr_base,
            breath_freq,
            coupling: coupling_for_pace(breath_freq),
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.hr_base, self.breath_freq, self.coupling, self.phase, self.jitter];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("heart model parameters must be finite"));
        }
        if self.coupling < 0.0 || self.jitter < 0.0 || self.breath_freq < 0.0 {
            return Err(Error::invalid("coupling, jitter and breath_freq must be non-negative"));
        }
        let slack = self.coupling + JITTER_CLAMP_SD * self.jitter;
        if self.hr_base - slack <= MIN_HR_BPM {
            return Err(Error::invalid(format!(
                "hr_base {} - coupling - 4*jitter must stay above {MIN_HR_BPM} bpm",
                self.hr_base
            )));
        }
        if self.hr_base + slack >= MAX_HR_BPM {
            return Err(Error::invalid(format!(
                "hr_base {} + coupling + 4*jitter must stay below {MAX_HR_BPM} bpm",
                self.hr_base
            )));
        }
        Ok(())
    }

    fn rsa(&self, t: f64) -> f64 {
        self.hr_base + self.coupling * (TAU * self.breath_freq * t + self.phase).sin()
    }

    /// Same curve from time `t` onward but breathing at a new rate. The
    /// phase is shifted so the oscillation is continuous at `t`.
    pub fn retuned(&self, t: f64, breath_freq: f64, coupling: f64) -> Self {
        let phase = (self.phase + TAU * (self.breath_freq - breath_freq) * t).rem_euclid(TAU);
        HeartModel { breath_freq, coupling, phase, ..*self }
    }

    /// Parses `synth:hr=70,breath=0.125,coupling=6,seed=1`. Omitted keys take
    /// their defaults; an omitted `coupling` follows [`coupling_for_pace`].
    /// `jitter` and `phase` are also accepted.
    pub fn from_descriptor(desc: &str) -> Result<Self> {
        let body = desc
            .strip_prefix("synth:")
            .or_else(|| (desc == "synth").then_some(""))
            .ok_or_else(|| Error::invalid(format!("source `{desc}` is not a synth: descriptor")))?;
        let mut m = HeartModel::default();
        let mut coupling = None;
        for kv in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("`{kv}` is not key=value")))?;
            let num = |v: &str| -> Result<f64> {
                v.parse().map_err(|_| Error::invalid(format!("`{k}` value `{v}` is not a number")))
            };
            match k {
                "hr" => m.hr_base = num(v)?,
                "breath" => m.breath_freq = num(v)?,
                "coupling" => coupling = Some(num(v)?),
                "phase" => m.phase = num(v)?,
                "jitter" => m.jitter = num(v)?,
                "seed" => {
                    m.seed = v.parse().map_err(|_| Error::invalid(format!("seed `{v}` is not an integer")))?
                }
                _ => return Err(Error::invalid(format!("unknown synth key `{k}`"))),
            }
        }
        m.coupling = coupling.unwrap_or_else(|| coupling_for_pace(m.breath_freq));
        m.validate()?;
        Ok(m)
    }
}

/// Seeded AR(1) walk sampled on a 1 s lattice and linearly interpolated.
/// Stationary standard deviation is `jitter`; values are clamped to ±4 sd.
#[derive(Debug, Clone)]
struct JitterWalk {
    rng: ChaCha8Rng,
    sd: f64,
    knots: Vec<f64>,
}

impl JitterWalk {
    fn new(seed: u64, sd: f64) -> Self {
        JitterWalk { rng: ChaCha8Rng::seed_from_u64(seed), sd, knots: Vec::new() }
    }

    fn knot(&mut self, k: usize) -> f64 {
        let limit = JITTER_CLAMP_SD * self.sd;
        while self.knots.len() <= k {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            let next = match self.knots.last() {
                None => self.sd * z,
                Some(&prev) => JITTER_RHO * prev + self.sd * (1.0 - JITTER_RHO * JITTER_RHO).sqrt() * z,
            };
            self.knots.push(next.clamp(-limit, limit));
        }
        self.knots[k]
    }

    fn value_at(&mut self, t: f64) -> f64 {
        if self.sd == 0.0 {
            return 0.0;
        }
        let x = t.max(0.0) / JITTER_KNOT_S;
        let k = x.floor() as usize;
        let frac = x - k as f64;
        let a = self.knot(k);
        let b = self.knot(k + 1);
        a + (b - a) * frac
    }
}

/// Instantaneous HR of the model at `t`, jitter included.
pub fn hr_at(model: &HeartModel, t: f64) -> f64 {
    model.rsa(t) + JitterWalk::new(model.seed, model.jitter).value_at(t)
}

/// Streaming integrate-and-fire beat source. The model may be retuned
/// between calls to [`BeatGenerator::advance_to`].
#[derive(Debug, Clone)]
pub struct BeatGenerator {
    model: HeartModel,
    walk: JitterWalk,
    step: u64,
    acc: f64,
    fired: u64,
    hr_now: f64,
}

impl BeatGenerator {
    pub fn new(model: HeartModel) -> Self {
        let mut walk = JitterWalk::new(model.seed, model.jitter);
        let hr_now = model.rsa(0.0) + walk.value_at(0.0);
        BeatGenerator { model, walk, step: 0, acc: 0.0, fired: 0, hr_now }
    }

    pub fn model(&self) -> &HeartModel {
        &self.model
    }

    pub fn now(&self) -> f64 {
        self.step as f64 * INTEGRATION_STEP_S
    }

    pub fn retune(&mut self, breath_freq: f64, coupling: f64) {
        let t = self.now();
        self.model = self.model.retuned(t, breath_freq, coupling);
        self.hr_now = self.model.rsa(t) + self.walk.value_at(t);
    }

    /// Integrates up to `t_end` and returns the beats fired on the way.
    pub fn advance_to(&mut self, t_end: f64) -> Vec<BeatEvent> {
        let dt = INTEGRATION_STEP_S;
        let last_step = (t_end / dt + 1e-9).floor().max(0.0) as u64;
        let mut beats = Vec::new();
        while self.step < last_step {
            let t1 = (self.step + 1) as f64 * dt;
            let hr1 = self.model.rsa(t1) + self.walk.value_at(t1);
            let inc = 0.5 * (self.hr_now + hr1) / 60.0 * dt;
            let next = self.acc + inc;
            let target = (self.fired + 1) as f64;
            // tolerance absorbs rounding in the running sum
            if next >= target - 1e-9 {
                self.fired += 1;
                let frac = ((target - self.acc) / inc).clamp(0.0, 1.0);
                let t0 = self.step as f64 * dt;
                beats.push(BeatEvent { t: t0 + frac * dt });
            }
            self.acc = next;
            self.hr_now = hr1;
            self.step += 1;
        }
        beats
    }
}

pub fn generate_beats(model: &HeartModel, duration: f64) -> Vec<BeatEvent> {
    BeatGenerator::new(*model).advance_to(duration)
}
