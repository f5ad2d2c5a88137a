//! Synthetic source generators used as a stand-in for recorded corpora.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{gen_lfm, LfmSpec, TimeSignal};
use crate::error::{Error, Result};

/// A recipe for one synthetic source. Randomized fields are drawn from the
/// seed passed to [`GeneratorSpec::generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// One fixed chirp.
    Lfm {
        f_start: f64,
        f_end: f64,
        launch_time: f64,
        duration: f64,
    },
    /// Repeated chirps with random start/end frequencies inside `band`.
    LfmPings {
        band: [f64; 2],
        pulse_secs: [f64; 2],
        pulses: [usize; 2],
    },
    /// Gaussian noise band-limited to `[lo, hi]` Hz, optionally amplitude
    /// modulated at `am_hz` with depth `am_depth`.
    BandNoise {
        lo: f64,
        hi: f64,
        #[serde(default)]
        am_hz: f64,
        #[serde(default)]
        am_depth: f64,
    },
    /// Harmonic series with random fundamental in `f0` plus weak noise.
    Harmonic {
        f0: [f64; 2],
        harmonics: usize,
        #[serde(default)]
        noise_level: f64,
    },
}

impl GeneratorSpec {
    /// Renders `length_secs` of audio at `sample_rate`; output peak is 1 unless silent.
    pub fn generate(&self, sample_rate: u32, length_secs: f64, seed: u64) -> Result<TimeSignal> {
        let len = (length_secs * sample_rate as f64).round() as usize;
        let fs = sample_rate as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = match *self {
            GeneratorSpec::Lfm {
                f_start,
                f_end,
                launch_time,
                duration,
            } => gen_lfm(&LfmSpec {
                f_start,
                f_end,
                launch_time,
                duration,
                total_length: length_secs,
                sample_rate,
            })?
            .into_samples(),
            GeneratorSpec::LfmPings {
                band,
                pulse_secs,
                pulses,
            } => {
                check_band(band[0], band[1], fs)?;
                let mut out = vec![0.0; len];
                let count = rng.random_range(pulses[0]..=pulses[1].max(pulses[0]));
                for _ in 0..count {
                    let dur = rng.random_range(pulse_secs[0]..=pulse_secs[1]).min(length_secs);
                    let launch = rng.random_range(0.0..=(length_secs - dur).max(0.0));
                    let a = rng.random_range(band[0]..band[1]);
                    let b = rng.random_range(band[0]..band[1]);
                    let ping = gen_lfm(&LfmSpec {
                        f_start: a,
                        f_end: b,
                        launch_time: launch,
                        duration: dur,
                        total_length: length_secs,
                        sample_rate,
                    })?;
                    for (o, s) in out.iter_mut().zip(ping.samples()) {
                        *o += s;
                    }
                }
                out
            }
            GeneratorSpec::BandNoise {
                lo,
                hi,
                am_hz,
                am_depth,
            } => {
                check_band(lo, hi, fs)?;
                let white: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
                let mut band = band_limit(&white, lo, hi, fs);
                if am_hz > 0.0 && am_depth > 0.0 {
                    let phase = rng.random_range(0.0..2.0 * PI);
                    for (n, s) in band.iter_mut().enumerate() {
                        let m = 1.0 - am_depth * 0.5 * (1.0 + (2.0 * PI * am_hz * n as f64 / fs + phase).cos());
                        *s *= m;
                    }
                }
                band
            }
            GeneratorSpec::Harmonic {
                f0,
                harmonics,
                noise_level,
            } => {
                let fundamental = rng.random_range(f0[0]..=f0[1]);
                let mut out = vec![0.0; len];
                for h in 1..=harmonics.max(1) {
                    let f = fundamental * h as f64;
                    if f >= fs / 2.0 {
                        break;
                    }
                    let phase = rng.random_range(0.0..2.0 * PI);
                    let amp = 1.0 / h as f64;
                    for (n, o) in out.iter_mut().enumerate() {
                        *o += amp * (2.0 * PI * f * n as f64 / fs + phase).sin();
                    }
                }
                if noise_level > 0.0 {
                    for o in out.iter_mut() {
                        let n: f64 = rng.sample(StandardNormal);
                        *o += noise_level * n;
                    }
                }
                out
            }
        };
        let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let samples = if peak > 0.0 {
            samples.into_iter().map(|s| s / peak).collect()
        } else {
            samples
        };
        TimeSignal::new(samples, sample_rate)
    }
}

fn check_band(lo: f64, hi: f64, fs: f64) -> Result<()> {
    if !(lo >= 0.0 && hi > lo && hi <= fs / 2.0) {
        return Err(Error::param(
            "band",
            format!("[{lo}, {hi}] Hz is not inside [0, {}] Hz", fs / 2.0),
        ));
    }
    Ok(())
}

/// Zeroes every DFT bin outside `[lo, hi]` Hz.
pub fn band_limit(x: &[f64], lo: f64, hi: f64, fs: f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let k_pos = k.min(n - k);
        let f = k_pos as f64 * fs / n as f64;
        if f < lo || f > hi {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    inv.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum_fraction(x: &[f64], lo: f64, hi: f64, fs: f64) -> f64 {
        let n = x.len();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        let mut inside = 0.0;
        let mut total = 0.0;
        for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
            let f = k as f64 * fs / n as f64;
            let e = c.norm_sqr();
            total += e;
            if f >= lo && f <= hi {
                inside += e;
            }
        }
        inside / total
    }

    #[test]
    fn band_noise_stays_in_band() {
        let spec = GeneratorSpec::BandNoise {
            lo: 500.0,
            hi: 1000.0,
            am_hz: 0.0,
            am_depth: 0.0,
        };
        let x = spec.generate(8000, 1.0, 3).unwrap();
        assert_eq!(x.len(), 8000);
        assert!((x.peak() - 1.0).abs() < 1e-12);
        assert!(spectrum_fraction(x.samples(), 500.0, 1000.0, 8000.0) > 0.999);
    }

    #[test]
    fn harmonic_below_cutoff() {
        let spec = GeneratorSpec::Harmonic {
            f0: [100.0, 120.0],
            harmonics: 5,
            noise_level: 0.0,
        };
        let x = spec.generate(8000, 0.5, 1).unwrap();
        assert!(spectrum_fraction(x.samples(), 90.0, 610.0, 8000.0) > 0.99);
    }

    #[test]
    fn pings_are_deterministic_per_seed() {
        let spec = GeneratorSpec::LfmPings {
            band: [1000.0, 3000.0],
            pulse_secs: [0.1, 0.2],
            pulses: [1, 3],
        };
        let a = spec.generate(8000, 1.0, 5).unwrap();
        let b = spec.generate(8000, 1.0, 5).unwrap();
        let c = spec.generate(8000, 1.0, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_band_rejected() {
        let spec = GeneratorSpec::BandNoise {
            lo: 3000.0,
            hi: 5000.0,
            am_hz: 0.0,
            am_depth: 0.0,
        };
        assert!(spec.generate(8000, 0.1, 0).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec: GeneratorSpec =
            serde_json::from_str(r#"{"kind":"band_noise","lo":100,"hi":400}"#).unwrap();
        assert_eq!(
            spec,
            GeneratorSpec::BandNoise {
                lo: 100.0,
                hi: 400.0,
                am_hz: 0.0,
                am_depth: 0.0
            }
        );
    }
}
