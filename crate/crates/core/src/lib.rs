//! Core logic for the Dišimo ambient biofeedback device.
//!
//! The crate is split along the device's signal path:
//!
//! * [`hrv`] turns heartbeat timestamps into instantaneous heart rate and a
//!   sliding-window HRV range, then classifies it as low, mid or high.
//! * [`heartsim`] produces synthetic beat streams with respiratory sinus
//!   arrhythmia so the whole loop runs without sensors.
//! * [`audio`] synthesizes the paced-breathing guide (pink noise shaped by an
//!   8 s inhale/exhale/pause envelope) and writes it as WAV.
//! * [`device`] is the pure controller: events in, actuator actions out.
//! * [`cluster`] aggregates the members of a shared session into a single
//!   mixed color and brightness.
//!
//! Nothing in here performs network I/O; see the `disimo-service` crate for
//! the hub and device host.

pub mod audio;
pub mod cluster;
pub mod device;
mod error;
pub mod heartsim;
pub mod hrv;

pub use error::{Error, Result};

/// An 8-bit RGB triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(from = "[u8; 3]", into = "[u8; 3]")]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const BLACK: Rgb = Rgb::new(0, 0, 0);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb { r, g, b }
    }

    pub fn to_hex(self) -> String {
        format!("#{:02X}{:02X}{:02X}", self.r, self.g, self.b)
    }
}

impl From<[u8; 3]> for Rgb {
    fn from([r, g, b]: [u8; 3]) -> Self {
        Rgb { r, g, b }
    }
}

impl From<Rgb> for [u8; 3] {
    fn from(c: Rgb) -> Self {
        [c.r, c.g, c.b]
    }
}

impl std::str::FromStr for Rgb {
    type Err = Error;

    /// Parses `R,G,B` with decimal channels in `0..=255`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::invalid(format!("color `{s}` must be R,G,B")));
        }
        let mut ch = [0u8; 3];
        for (dst, p) in ch.iter_mut().zip(&parts) {
            *dst = p
                .parse()
                .map_err(|_| Error::invalid(format!("color channel `{p}` is not in 0..=255")))?;
        }
        Ok(ch.into())
    }
}
