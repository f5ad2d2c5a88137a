use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::TimeSignal;
use crate::error::{Error, Result};

/// A linear frequency-modulated pulse placed inside a longer silent record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfmSpec {
    pub f_start: f64,
    pub f_end: f64,
    pub launch_time: f64,
    pub duration: f64,
    pub total_length: f64,
    pub sample_rate: u32,
}

impl LfmSpec {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.sample_rate == 0 {
            return Err(Error::param("sample_rate", "must be positive"));
        }
        for (name, f) in [("f_start", self.f_start), ("f_end", self.f_end)] {
            if !(f > 0.0 && f < nyquist) {
                return Err(Error::param(
                    name,
                    format!("{f} Hz is outside (0, {nyquist}) Hz"),
                ));
            }
        }
        if !(self.launch_time >= 0.0) {
            return Err(Error::param(
                "launch_time",
                format!("{} s is negative", self.launch_time),
            ));
        }
        if !(self.duration >= 0.0) {
            return Err(Error::param(
                "duration",
                format!("{} s is negative", self.duration),
            ));
        }
        if self.launch_time + self.duration > self.total_length + 1e-12 {
            return Err(Error::param(
                "total_length",
                format!(
                    "pulse ends at {} s, after the {} s record",
                    self.launch_time + self.duration,
                    self.total_length
                ),
            ));
        }
        Ok(())
    }
}

/// Generates a unit-amplitude quadratic-phase chirp `cos(2pi(f0 tau + k tau^2 / 2))`
/// on `[launch, launch + duration)` and zeros elsewhere.
pub fn gen_lfm(spec: &LfmSpec) -> Result<TimeSignal> {
    spec.validate()?;
    let fs = spec.sample_rate as f64;
    let len = (spec.total_length * fs).round() as usize;
    let start = ((spec.launch_time * fs).round() as usize).min(len);
    let end = (((spec.launch_time + spec.duration) * fs).round() as usize).min(len);
    let mut samples = vec![0.0; len];
    if end > start {
        let sweep = (spec.f_end - spec.f_start) / spec.duration;
        for (n, s) in samples[start..end].iter_mut().enumerate() {
            let tau = n as f64 / fs;
            *s = (2.0 * PI * (spec.f_start * tau + 0.5 * sweep * tau * tau)).cos();
        }
    }
    TimeSignal::new(samples, spec.sample_rate)
}
