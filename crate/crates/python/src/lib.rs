//! Python bindings for `disimo_core`.
//!
//! Times are seconds, rates are beats (or breaths) per minute, colors are
//! `(r, g, b)` tuples. Device actions and session snapshots come back as
//! plain dicts with the same field names as the JSON wire format.

use disimo_core::audio::{self, BreathPattern, GuideSpec, PinkNoise};
use disimo_core::cluster::{self, MemberStatus, SessionSnapshot};
use disimo_core::device::{DeviceConfig, DeviceEvent, DeviceRunner, TraceEntry};
use disimo_core::heartsim::{self, BeatGenerator, HeartModel};
use disimo_core::hrv::{self, BeatEvent, HrvClass, HrvSample, DEFAULT_WINDOW_S};
use disimo_core::{Error, Rgb};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rgb((r, g, b): (u8, u8, u8)) -> Rgb {
    Rgb::new(r, g, b)
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(json_to_py(py, x)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, json_to_py(py, x)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

fn class_name(c: HrvClass) -> &'static str {
    match c {
        HrvClass::Low => "low",
        HrvClass::Mid => "mid",
        HrvClass::High => "high",
    }
}

// ---------------------------------------------------------------- hrv

/// Instantaneous heart rate (bpm) of the beat at `beat` following `prev`.
#[pyfunction]
fn instantaneous_hr(prev: f64, beat: f64) -> PyResult<f64> {
    hrv::instantaneous_hr(BeatEvent::at(prev), BeatEvent::at(beat)).map(|s| s.hr).map_err(py_err)
}

/// HR range over `(t - window, t]` from a sorted list of beat times, or
/// `None` with fewer than two HR samples in the window.
#[pyfunction]
#[pyo3(signature = (beat_times, t, window = DEFAULT_WINDOW_S))]
fn hrv_range(beat_times: Vec<f64>, t: f64, window: f64) -> PyResult<Option<f64>> {
    let beats: Vec<BeatEvent> = beat_times.into_iter().map(BeatEvent::at).collect();
    let samples = hrv::hr_series(&beats).map_err(py_err)?;
    let h = hrv::hrv_range(&samples, t, window);
    Ok(h.defined.then_some(h.range))
}

/// `"low"`, `"mid"` or `"high"` for an HRV range in bpm.
#[pyfunction]
fn classify(range: f64) -> PyResult<&'static str> {
    hrv::classify(&HrvSample::with_range(0.0, range)).map(class_name).map_err(py_err)
}

#[pyfunction]
fn read_rr_file(path: std::path::PathBuf) -> PyResult<Vec<f64>> {
    Ok(hrv::read_rr_file(path).map_err(py_err)?.into_iter().map(|b| b.t).collect())
}

// ---------------------------------------------------------------- heartsim

#[pyfunction]
fn coupling_for_pace(breath_freq: f64) -> f64 {
    heartsim::coupling_for_pace(breath_freq)
}

#[pyclass(name = "HeartModel", module = "disimo", from_py_object)]
#[derive(Clone)]
struct PyHeartModel(HeartModel);

#[pymethods]
impl PyHeartModel {
    /// `coupling` defaults to the tuning curve value for `breath_freq`.
    #[new]
    #[pyo3(signature = (hr_base = 70.0, breath_freq = 0.25, coupling = None, seed = 0, jitter = 0.2, phase = 0.0))]
    fn new(hr_base: f64, breath_freq: f64, coupling: Option<f64>, seed: u64, jitter: f64, phase: f64) -> PyResult<Self> {
        let model = HeartModel {
            hr_base,
            breath_freq,
            coupling: coupling.unwrap_or_else(|| heartsim::coupling_for_pace(breath_freq)),
            phase,
            seed,
            jitter,
        };
        model.validate().map_err(py_err)?;
        Ok(PyHeartModel(model))
    }

    /// Parses `synth:hr=70,breath=0.125,...`.
    #[staticmethod]
    fn from_descriptor(desc: &str) -> PyResult<Self> {
        HeartModel::from_descriptor(desc).map(PyHeartModel).map_err(py_err)
    }

    #[getter]
    fn hr_base(&self) -> f64 {
        self.0.hr_base
    }

    #[getter]
    fn breath_freq(&self) -> f64 {
        self.0.breath_freq
    }

    #[getter]
    fn coupling(&self) -> f64 {
        self.0.coupling
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    fn hr_at(&self, t: f64) -> f64 {
        heartsim::hr_at(&self.0, t)
    }

    /// Beat times in `[0, duration]`.
    fn beats(&self, duration: f64) -> Vec<f64> {
        heartsim::generate_beats(&self.0, duration).into_iter().map(|b| b.t).collect()
    }

    fn __repr__(&self) -> String {
        let m = &self.0;
        format!(
            "HeartModel(hr_base={}, breath_freq={}, coupling={}, seed={}, jitter={}, phase={})",
            m.hr_base, m.breath_freq, m.coupling, m.seed, m.jitter, m.phase
        )
    }
}

/// Incremental beat generator; `retune` changes breathing mid-stream.
#[pyclass(name = "HeartSim", module = "disimo")]
struct PyHeartSim(BeatGenerator);

#[pymethods]
impl PyHeartSim {
    #[new]
    fn new(model: PyHeartModel) -> Self {
        PyHeartSim(BeatGenerator::new(model.0))
    }

    #[getter]
    fn now(&self) -> f64 {
        self.0.now()
    }

    fn advance_to(&mut self, t: f64) -> Vec<f64> {
        self.0.advance_to(t).into_iter().map(|b| b.t).collect()
    }

    #[pyo3(signature = (breath_freq, coupling = None))]
    fn retune(&mut self, breath_freq: f64, coupling: Option<f64>) {
        self.0.retune(breath_freq, coupling.unwrap_or_else(|| heartsim::coupling_for_pace(breath_freq)));
    }
}

// ---------------------------------------------------------------- audio

/// Guide envelope in `[0, 1]` at time `t`.
#[pyfunction]
fn envelope(t: f64) -> f64 {
    audio::envelope(&BreathPattern::default(), t)
}

#[pyfunction]
#[pyo3(signature = (n, seed = 0))]
fn pink_noise(n: usize, seed: u64) -> Vec<f64> {
    PinkNoise::new(seed).take(n).collect()
}

fn guide_spec(cycles: u32, sample_rate: u32, gain: f64, seed: u64) -> GuideSpec {
    GuideSpec { cycles, sample_rate, peak_gain: gain, seed, ..Default::default() }
}

#[pyfunction]
#[pyo3(signature = (cycles = 4, sample_rate = 44_100, gain = 0.3, seed = 0))]
fn synthesize_guide(cycles: u32, sample_rate: u32, gain: f64, seed: u64) -> PyResult<Vec<f32>> {
    audio::synthesize_guide(&guide_spec(cycles, sample_rate, gain, seed)).map_err(py_err)
}

/// Renders the guide to a 16-bit mono WAV. Returns the number of samples.
#[pyfunction]
#[pyo3(signature = (path, cycles = 4, sample_rate = 44_100, gain = 0.3, seed = 0))]
fn write_guide(path: std::path::PathBuf, cycles: u32, sample_rate: u32, gain: f64, seed: u64) -> PyResult<usize> {
    let buf = synthesize_guide(cycles, sample_rate, gain, seed)?;
    Ok(audio::write_wav(&buf, sample_rate, path).map_err(py_err)?.samples)
}

// ---------------------------------------------------------------- cluster

type MemberTuple = ((u8, u8, u8), bool, bool);

fn members(list: Vec<MemberTuple>) -> Vec<MemberStatus> {
    list.into_iter()
        .enumerate()
        .map(|(i, (c, active, coherent))| MemberStatus::new(i.to_string(), rgb(c)).with_flags(active, coherent))
        .collect()
}

/// Session light color for `[(color, active, coherent), ...]`.
#[pyfunction]
fn mix_colors(list: Vec<MemberTuple>) -> (u8, u8, u8) {
    let c = cluster::mix_colors(&members(list));
    (c.r, c.g, c.b)
}

/// Coherent members over active members; 0 when nobody is active.
#[pyfunction]
fn brightness(list: Vec<MemberTuple>) -> f64 {
    cluster::brightness(&members(list))
}

fn snapshot_py(py: Python<'_>, s: Option<SessionSnapshot>) -> PyResult<Py<PyAny>> {
    match s {
        Some(s) => to_py(py, &s),
        None => Ok(py.None()),
    }
}

/// Session aggregation. Mutating methods return the new snapshot dict, or
/// `None` if the aggregate did not change.
#[pyclass(name = "Session", module = "disimo")]
#[derive(Default)]
struct PySession(cluster::Session);

#[pymethods]
impl PySession {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    fn join(&mut self, py: Python<'_>, device: &str, color: (u8, u8, u8)) -> PyResult<Py<PyAny>> {
        snapshot_py(py, self.0.join(device, rgb(color)))
    }

    fn leave(&mut self, py: Python<'_>, device: &str) -> PyResult<Py<PyAny>> {
        let s = self.0.leave(device).map_err(py_err)?;
        snapshot_py(py, s)
    }

    /// Returns `(snapshot_or_none, invited_device_ids)`.
    fn update(&mut self, py: Python<'_>, device: &str, active: bool, coherent: bool) -> PyResult<(Py<PyAny>, Vec<String>)> {
        let color = self
            .0
            .members()
            .find(|m| m.device_id == device)
            .map(|m| m.color)
            .ok_or_else(|| py_err(Error::NotAMember(device.to_string())))?;
        let change = self
            .0
            .on_member_change(MemberStatus::new(device, color).with_flags(active, coherent))
            .map_err(py_err)?;
        Ok((snapshot_py(py, change.snapshot)?, change.invites))
    }

    fn snapshot(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.snapshot())
    }

    #[getter]
    fn members(&self) -> Vec<String> {
        self.0.member_ids().map(str::to_string).collect()
    }
}

// ---------------------------------------------------------------- device

/// One simulated device. Every method takes the current time and returns
/// the list of trace entries it produced, e.g.
/// `{"t": 600.0, "action": "start_audio", "cycles": 4, "duration": 32.0}`.
#[pyclass(name = "Device", module = "disimo")]
struct PyDevice(DeviceRunner);

impl PyDevice {
    fn emit(&mut self, py: Python<'_>, entries: disimo_core::Result<Vec<TraceEntry>>) -> PyResult<Py<PyAny>> {
        to_py(py, &entries.map_err(py_err)?)
    }

    fn event(&mut self, py: Python<'_>, e: DeviceEvent) -> PyResult<Py<PyAny>> {
        let entries = self.0.apply(&e);
        self.emit(py, entries)
    }
}

#[pymethods]
impl PyDevice {
    #[new]
    #[pyo3(signature = (color = (255, 255, 255), low_trigger = 600.0, guide_cycles = 4, guide_gain = 0.3, snooze = 60.0, fade = 2.0, hrv_window = DEFAULT_WINDOW_S))]
    fn new(
        color: (u8, u8, u8),
        low_trigger: f64,
        guide_cycles: u32,
        guide_gain: f64,
        snooze: f64,
        fade: f64,
        hrv_window: f64,
    ) -> PyResult<Self> {
        let cfg = DeviceConfig { low_trigger, guide_cycles, guide_gain, snooze, fade, user_color: rgb(color), hrv_window };
        DeviceRunner::new(cfg).map(PyDevice).map_err(py_err)
    }

    /// Current mode: idle, reminding, snoozed, active or coherent.
    #[getter]
    fn mode(&self) -> PyResult<String> {
        let v = serde_json::to_value(self.0.state().mode).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(v.as_str().unwrap_or_default().to_string())
    }

    /// Most recent HRV range, `None` until defined.
    #[getter]
    fn hrv(&self) -> Option<f64> {
        self.0.latest_hrv().filter(|h| h.defined).map(|h| h.range)
    }

    fn beat(&mut self, py: Python<'_>, t: f64) -> PyResult<Py<PyAny>> {
        let entries = self.0.push_beat(BeatEvent::at(t));
        self.emit(py, entries)
    }

    fn tick(&mut self, py: Python<'_>, t: f64) -> PyResult<Py<PyAny>> {
        self.event(py, DeviceEvent::Tick { t })
    }

    fn grasp(&mut self, py: Python<'_>, t: f64) -> PyResult<Py<PyAny>> {
        self.event(py, DeviceEvent::Grasp { t })
    }

    fn release(&mut self, py: Python<'_>, t: f64) -> PyResult<Py<PyAny>> {
        self.event(py, DeviceEvent::Release { t })
    }

    fn invite(&mut self, py: Python<'_>, t: f64) -> PyResult<Py<PyAny>> {
        self.event(py, DeviceEvent::Invite { t })
    }

    fn snapshot(&mut self, py: Python<'_>, t: f64, color: (u8, u8, u8), brightness: f64, active: usize, members: usize) -> PyResult<Py<PyAny>> {
        let snapshot = SessionSnapshot { color: rgb(color), brightness, active_count: active, member_count: members };
        self.event(py, DeviceEvent::Snapshot { t, snapshot })
    }
}

#[pymodule]
fn disimo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(instantaneous_hr, m)?)?;
    m.add_function(wrap_pyfunction!(hrv_range, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(read_rr_file, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_for_pace, m)?)?;
    m.add_function(wrap_pyfunction!(envelope, m)?)?;
    m.add_function(wrap_pyfunction!(pink_noise, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_guide, m)?)?;
    m.add_function(wrap_pyfunction!(write_guide, m)?)?;
    m.add_function(wrap_pyfunction!(mix_colors, m)?)?;
    m.add_function(wrap_pyfunction!(brightness, m)?)?;
    m.add_class::<PyHeartModel>()?;
    m.add_class::<PyHeartSim>()?;
    m.add_class::<PySession>()?;
    m.add_class::<PyDevice>()?;
    m.add("HRV_LOW_BPM", hrv::HRV_LOW_BPM)?;
    m.add("HRV_HIGH_BPM", hrv::HRV_HIGH_BPM)?;
    Ok(())
}
