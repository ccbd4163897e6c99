//! Breathing guide synthesis.
//!
//! The guide is pink noise under a raised-cosine envelope: it swells over
//! the inhale, recedes over the exhale and is silent during the pause. One
//! cycle is 10/3 s + 10/3 s + 4/3 s = 8 s, i.e. 7.5 breaths per minute.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CYCLE_S: f64 = 8.0;
pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;
pub const DEFAULT_CYCLES: u32 = 4;
pub const DEFAULT_PEAK_GAIN: f64 = 0.3;
pub const PINK_ROWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreathPattern {
    pub t_in: f64,
    pub t_out: f64,
    pub t_pause: f64,
}

impl Default for BreathPattern {
    fn default() -> Self {
        BreathPattern { t_in: 10.0 / 3.0, t_out: 10.0 / 3.0, t_pause: 4.0 / 3.0 }
    }
}

impl BreathPattern {
    pub fn cycle(&self) -> f64 {
        self.t_in + self.t_out + self.t_pause
    }

    pub fn breaths_per_minute(&self) -> f64 {
        60.0 / self.cycle()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_in > 0.0 && self.t_out > 0.0 && self.t_pause >= 0.0) {
            return Err(Error::invalid("breath phases must be positive"));
        }
        if (self.cycle() - CYCLE_S).abs() > 1e-9 {
            return Err(Error::invalid(format!("breath cycle is {} s, expected {CYCLE_S} s", self.cycle())));
        }
        if self.t_out + self.t_pause <= self.t_in {
            return Err(Error::invalid("exhale plus pause must outlast the inhale"));
        }
        Ok(())
    }

    /// True when `t` falls in the silent pause at the end of a cycle.
    pub fn in_pause(&self, t: f64) -> bool {
        t.rem_euclid(self.cycle()) >= self.t_in + self.t_out
    }
}

/// Guide amplitude at `t` (seconds, taken modulo the cycle), in `[0, 1]`.
pub fn envelope(pattern: &BreathPattern, t: f64) -> f64 {
    let phase = t.rem_euclid(pattern.cycle());
    if phase < pattern.t_in {
        0.5 * (1.0 - (PI * phase / pattern.t_in).cos())
    } else if phase < pattern.t_in + pattern.t_out {
        0.5 * (1.0 + (PI * (phase - pattern.t_in) / pattern.t_out).cos())
    } else {
        0.0
    }
}

/// Voss–McCartney pink noise: 16 rows of held white noise, row `k` redrawn
/// every `2^(k+1)` samples (chosen by the trailing zeros of a counter).
/// Output is the mean of the rows, so it never leaves `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct PinkNoise {
    rng: ChaCha8Rng,
    rows: [f64; PINK_ROWS],
    counter: u32,
}

impl PinkNoise {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        PinkNoise { rng, rows, counter: 0 }
    }

    pub fn next_sample(&mut self) -> f64 {
        self.counter = self.counter.wrapping_add(1);
        let k = self.counter.trailing_zeros() as usize;
        if k < PINK_ROWS {
            self.rows[k] = self.rng.random_range(-1.0..=1.0);
        }
        self.rows.iter().sum::<f64>() / PINK_ROWS as f64
    }

    pub fn samples(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_sample()).collect()
    }
}

impl Iterator for PinkNoise {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_sample())
    }
}

pub fn pink_samples(state: &mut PinkNoise, n: usize) -> Vec<f64> {
    state.samples(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuideSpec {
    pub pattern: BreathPattern,
    pub cycles: u32,
    pub sample_rate: u32,
    pub peak_gain: f64,
    pub seed: u64,
}

impl Default for GuideSpec {
    fn default() -> Self {
        GuideSpec {
            pattern: BreathPattern::default(),
            cycles: DEFAULT_CYCLES,
            sample_rate: DEFAULT_SAMPLE_RATE,
            peak_gain: DEFAULT_PEAK_GAIN,
            seed: 0,
        }
    }
}

impl GuideSpec {
    pub fn validate(&self) -> Result<()> {
        self.pattern.validate()?;
        if self.cycles == 0 {
            return Err(Error::invalid("guide needs at least one cycle"));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.peak_gain) {
            return Err(Error::invalid(format!("peak gain {} outside [0, 1]", self.peak_gain)));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.cycles as f64 * CYCLE_S
    }

    pub fn len_samples(&self) -> usize {
        // 8 s cycles at an integer rate always give a whole sample count
        self.cycles as usize * CYCLE_S as usize * self.sample_rate as usize
    }
}

pub fn synthesize_guide(spec: &GuideSpec) -> Result<Vec<f32>> {
    spec.validate()?;
    let sr = spec.sample_rate as f64;
    let mut noise = PinkNoise::new(spec.seed);
    Ok((0..spec.len_samples())
        .map(|i| {
            let env = envelope(&spec.pattern, i as f64 / sr);
            let s = noise.next_sample();
            (spec.peak_gain * env * s) as f32
        })
        .collect())
}

/// Linear fade to silence starting at `from` and lasting `fade_s`; every
/// sample after the ramp is zeroed.
pub fn fade_out(buf: &mut [f32], from: usize, sample_rate: u32, fade_s: f64) {
    let ramp = (fade_s * sample_rate as f64).round() as usize;
    for (j, s) in buf.iter_mut().skip(from).enumerate() {
        let g = if j < ramp { 1.0 - j as f64 / ramp as f64 } else { 0.0 };
        *s = (*s as f64 * g) as f32;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavReport {
    pub samples: usize,
    pub clipped: usize,
}

pub fn to_i16(s: f32) -> i16 {
    (s.clamp(-1.0, 1.0) as f64 * 32767.0).round() as i16
}

/// Writes mono 16-bit PCM. Samples outside `[-1, 1]` are clipped.
pub fn write_wav(buffer: &[f32], sample_rate: u32, path: impl AsRef<Path>) -> Result<WavReport> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path.as_ref(), spec)?;
    let mut clipped = 0;
    for &s in buffer {
        if !(-1.0..=1.0).contains(&s) {
            clipped += 1;
        }
        w.write_sample(to_i16(s))?;
    }
    w.finalize()?;
    if clipped > 0 {
        log::warn!("{}: clipped {clipped} out-of-range samples", path.as_ref().display());
    }
    Ok(WavReport { samples: buffer.len(), clipped })
}

pub fn read_wav_i16(path: impl AsRef<Path>) -> Result<(hound::WavSpec, Vec<i16>)> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    let samples = r.samples::<i16>().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((spec, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_constants() {
        let p = BreathPattern::default();
        assert_eq!(p.cycle(), 8.0);
        assert_eq!(p.breaths_per_minute(), 7.5);
        assert!(p.t_out + p.t_pause > p.t_in);
        p.validate().unwrap();
        assert!(BreathPattern { t_in: 4.0, t_out: 2.0, t_pause: 2.0 }.validate().is_err());
        assert!(BreathPattern { t_in: 3.0, t_out: 3.0, t_pause: 1.0 }.validate().is_err());
    }

    #[test]
    fn envelope_examples() {
        let p = BreathPattern::default();
        assert_eq!(envelope(&p, 0.0), 0.0);
        assert_eq!(envelope(&p, 10.0 / 3.0), 1.0);
        assert_eq!(envelope(&p, 7.0), 0.0);
        assert!((envelope(&p, 5.0 / 3.0) - 0.5).abs() < 1e-15);
        // periodic
        assert_eq!(envelope(&p, 8.0 + 1.25), envelope(&p, 1.25));
    }

    #[test]
    fn envelope_is_continuous() {
        let p = BreathPattern::default();
        let dt = 1e-4;
        let lipschitz = PI / 2.0 / p.t_in.min(p.t_out);
        let mut prev = envelope(&p, 0.0);
        for i in 1..200_000 {
            let e = envelope(&p, i as f64 * dt);
            assert!((0.0..=1.0).contains(&e));
            assert!((e - prev).abs() <= lipschitz * dt + 1e-12, "jump at {}", i as f64 * dt);
            prev = e;
        }
    }

    #[test]
    fn pink_noise_basics() {
        assert!(pink_samples(&mut PinkNoise::new(1), 0).is_empty());
        let a = pink_samples(&mut PinkNoise::new(7), 1000);
        let b = pink_samples(&mut PinkNoise::new(7), 1000);
        assert_eq!(a, b);
        assert_ne!(a, pink_samples(&mut PinkNoise::new(8), 1000));
        assert!(a.iter().all(|s| (-1.0..=1.0).contains(s)));
    }

    #[test]
    fn guide_length_and_silence() {
        let spec = GuideSpec::default();
        let g = synthesize_guide(&spec).unwrap();
        assert_eq!(g.len(), 1_411_200);
        let sr = spec.sample_rate as f64;
        for (i, s) in g.iter().enumerate() {
            if spec.pattern.in_pause(i as f64 / sr) {
                assert_eq!(*s, 0.0, "sample {i}");
            }
        }
        let silent = synthesize_guide(&GuideSpec { peak_gain: 0.0, cycles: 1, ..spec }).unwrap();
        assert!(silent.iter().all(|s| *s == 0.0));
        assert!(synthesize_guide(&GuideSpec { cycles: 0, ..spec }).is_err());
        assert!(synthesize_guide(&GuideSpec { peak_gain: 1.5, ..spec }).is_err());
    }

    #[test]
    fn guide_has_no_clicks() {
        let spec = GuideSpec { cycles: 1, ..Default::default() };
        let g = synthesize_guide(&spec).unwrap();
        let sr = spec.sample_rate as f64;
        // at most one row changes per sample, moving the mean by <= 2/16
        let noise_step = 2.0 / PINK_ROWS as f64;
        let env_lip = PI / 2.0 / spec.pattern.t_in;
        let bound = spec.peak_gain * (noise_step + env_lip / sr) + 1e-6;
        for w in g.windows(2) {
            assert!(((w[1] - w[0]) as f64).abs() <= bound);
        }
    }

    #[test]
    fn fade_ramps_to_zero() {
        let mut buf = vec![1.0f32; 10];
        fade_out(&mut buf, 2, 4, 1.0);
        assert_eq!(buf, vec![1.0, 1.0, 1.0, 0.75, 0.5, 0.25, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn wav_header_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("silence.wav");
        let r = write_wav(&vec![0.0; 44_100], 44_100, &path).unwrap();
        assert_eq!(r.clipped, 0);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 44 + 88_200);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(&bytes[8..16], b"WAVEfmt ");
        assert_eq!(u16::from_le_bytes([bytes[20], bytes[21]]), 1, "PCM format tag");
        assert_eq!(u16::from_le_bytes([bytes[22], bytes[23]]), 1, "mono");
        assert_eq!(u16::from_le_bytes([bytes[34], bytes[35]]), 16, "bits");
        assert_eq!(&bytes[36..40], b"data");

        let path = dir.path().join("tones.wav");
        let buf = [1.0f32, -1.0, 0.5, -0.25, 0.0, 1.7, -3.0];
        let r = write_wav(&buf, 8000, &path).unwrap();
        assert_eq!(r.clipped, 2);
        let (spec, back) = read_wav_i16(&path).unwrap();
        assert_eq!(spec.sample_rate, 8000);
        let expect: Vec<i16> = buf.iter().map(|&s| to_i16(s)).collect();
        assert_eq!(back, expect);
        assert_eq!(back[0], 32767);
        assert_eq!(back[6], -32767);
    }
}
