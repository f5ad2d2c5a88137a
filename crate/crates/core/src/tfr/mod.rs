//! Short-time Fourier analysis and overlap-add synthesis.
//!
//! Frame `t` covers samples `[t*hop - pad, t*hop - pad + frame_len)` of the input,
//! with `pad = frame_len - hop` and zeros outside the signal. That padding puts
//! every input sample under the full set of overlapping frames, so synthesis is
//! exact up to the edges and not only in the interior.
//!
//! The DFT length equals the frame length; no padding to a power of two.

mod export;

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::TimeSignal;

pub(crate) use export::write_pgm;
pub use export::{read_spectrogram, write_magnitude_csv, write_magnitude_pgm, write_spectrogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hann,
    SqrtHann,
    Hamming,
    Rect,
}

impl WindowKind {
    /// Periodic (DFT-even) analysis window of length `n`.
    pub fn analysis(self, n: usize) -> Vec<f64> {
        let cos = |i: usize| (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
        (0..n)
            .map(|i| match self {
                WindowKind::Hann => 0.5 - 0.5 * cos(i),
                WindowKind::SqrtHann => (0.5 - 0.5 * cos(i)).max(0.0).sqrt(),
                WindowKind::Hamming => 0.54 - 0.46 * cos(i),
                WindowKind::Rect => 1.0,
            })
            .collect()
    }

    /// Synthesis window: the analysis window again for `sqrt_hann`, flat otherwise.
    pub fn synthesis(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::SqrtHann => self.analysis(n),
            _ => vec![1.0; n],
        }
    }

    pub fn code(self) -> u8 {
        match self {
            WindowKind::Hann => 0,
            WindowKind::SqrtHann => 1,
            WindowKind::Hamming => 2,
            WindowKind::Rect => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => WindowKind::Hann,
            1 => WindowKind::SqrtHann,
            2 => WindowKind::Hamming,
            3 => WindowKind::Rect,
            _ => return None,
        })
    }
}

impl std::str::FromStr for WindowKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "hann" => Ok(WindowKind::Hann),
            "sqrt_hann" => Ok(WindowKind::SqrtHann),
            "hamming" => Ok(WindowKind::Hamming),
            "rect" => Ok(WindowKind::Rect),
            other => Err(format!(
                "unknown window `{other}` (expected hann, sqrt_hann, hamming, rect)"
            )),
        }
    }
}

/// How overlap-added frames are rescaled at synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OverlapNorm {
    /// Divide each output sample by the summed window product covering it.
    #[default]
    Envelope,
    /// Divide by one constant `A` (`0.5 * frame_len / hop` for Hann); requires the
    /// overlap-add sum to be flat within 1%.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    #[serde(default)]
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_ms: 32.0,
            hop_ms: 8.0,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn new(frame_ms: f64, hop_ms: f64, window: WindowKind) -> Self {
        Self {
            frame_ms,
            hop_ms,
            window,
        }
    }

    /// Config expressed in samples at a given rate, e.g. a 512-point frame.
    pub fn from_points(frame: usize, hop: usize, window: WindowKind, sample_rate: u32) -> Self {
        let ms = |n: usize| n as f64 * 1000.0 / sample_rate as f64;
        Self {
            frame_ms: ms(frame),
            hop_ms: ms(hop),
            window,
        }
    }

    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (self.frame_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop(&self, sample_rate: u32) -> usize {
        (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn freq_bins(&self, sample_rate: u32) -> usize {
        self.frame_len(sample_rate) / 2 + 1
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if !(self.hop_ms > 0.0 && self.frame_ms > self.hop_ms) {
            return Err(Error::param(
                "stft",
                format!(
                    "need frame_ms > hop_ms > 0, got {} / {}",
                    self.frame_ms, self.hop_ms
                ),
            ));
        }
        let (n, h) = (self.frame_len(sample_rate), self.hop(sample_rate));
        if h == 0 || n < 2 || h > n {
            return Err(Error::param(
                "stft",
                format!("frame {n} / hop {h} samples at {sample_rate} Hz is unusable"),
            ));
        }
        Ok(())
    }
}

/// One-sided complex STFT, `T` frames by `F = frame_len / 2 + 1` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: Array2<Complex64>,
    frame_len: usize,
    hop: usize,
    sample_rate: u32,
    window: WindowKind,
    signal_len: usize,
}

impl Spectrogram {
    pub fn from_parts(
        bins: Array2<Complex64>,
        frame_len: usize,
        hop: usize,
        sample_rate: u32,
        window: WindowKind,
        signal_len: usize,
    ) -> Result<Self> {
        if bins.ncols() != frame_len / 2 + 1 {
            return Err(Error::param(
                "bins",
                format!(
                    "{} columns but frame_len {frame_len} implies {}",
                    bins.ncols(),
                    frame_len / 2 + 1
                ),
            ));
        }
        if hop == 0 || hop > frame_len {
            return Err(Error::param("hop", format!("{hop} not in 1..={frame_len}")));
        }
        if bins.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::param("bins", "non-finite entry"));
        }
        Ok(Self {
            bins,
            frame_len,
            hop,
            sample_rate,
            window,
            signal_len,
        })
    }

    pub fn bins(&self) -> &Array2<Complex64> {
        &self.bins
    }

    /// Same metadata, new contents.
    pub fn with_bins(&self, bins: Array2<Complex64>) -> Result<Self> {
        if bins.dim() != self.bins.dim() {
            return Err(Error::param(
                "bins",
                format!("shape {:?} differs from {:?}", bins.dim(), self.bins.dim()),
            ));
        }
        Ok(Self {
            bins,
            ..self.clone()
        })
    }

    pub fn frames(&self) -> usize {
        self.bins.nrows()
    }

    pub fn freq_bins(&self) -> usize {
        self.bins.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.bins.dim()
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn window(&self) -> WindowKind {
        self.window
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// Physical frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.frame_len as f64
    }

    pub fn magnitudes(&self) -> Array2<f64> {
        self.bins.mapv(|c| c.norm())
    }

    pub fn energy(&self) -> f64 {
        self.bins.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn scaled(&self, gain: f64) -> Spectrogram {
        Spectrogram {
            bins: self.bins.mapv(|c| c * gain),
            ..self.clone()
        }
    }

    pub fn same_layout(&self, other: &Spectrogram) -> bool {
        self.bins.dim() == other.bins.dim()
            && self.frame_len == other.frame_len
            && self.hop == other.hop
    }

    /// Elementwise sum of spectrograms sharing a layout.
    pub fn sum<'a>(specs: impl IntoIterator<Item = &'a Spectrogram>) -> Result<Spectrogram> {
        let mut iter = specs.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::param("specs", "nothing to sum"))?;
        let mut acc = first.clone();
        for s in iter {
            if !acc.same_layout(s) {
                return Err(Error::param("specs", "spectrogram layouts differ"));
            }
            acc.bins += &s.bins;
        }
        Ok(acc)
    }
}

fn frame_count(signal_len: usize, frame_len: usize, hop: usize) -> usize {
    let pad = frame_len - hop;
    (signal_len + pad - 1) / hop + 1
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::<f64>::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

/// Forward STFT of a real signal.
pub fn stft(x: &TimeSignal, cfg: &StftConfig) -> Result<Spectrogram> {
    let fs = x.sample_rate();
    cfg.validate(fs)?;
    let n = cfg.frame_len(fs);
    let hop = cfg.hop(fs);
    if x.len() < n {
        return Err(Error::param(
            "x",
            format!("signal has {} samples, shorter than one {n}-sample frame", x.len()),
        ));
    }
    let frames = frame_count(x.len(), n, hop);
    let pad = (n - hop) as isize;
    let bins_per_frame = n / 2 + 1;
    let window = cfg.window.analysis(n);
    let fft = plan(n, false);
    let samples = x.samples();

    let rows: Vec<Vec<Complex64>> = (0..frames)
        .into_par_iter()
        .map(|t| {
            let start = (t * hop) as isize - pad;
            let mut buf: Vec<Complex64> = (0..n)
                .map(|i| {
                    let idx = start + i as isize;
                    let v = if idx >= 0 && (idx as usize) < samples.len() {
                        samples[idx as usize]
                    } else {
                        0.0
                    };
                    Complex64::new(v * window[i], 0.0)
                })
                .collect();
            fft.process(&mut buf);
            buf.truncate(bins_per_frame);
            buf
        })
        .collect();

    let mut bins = Array2::zeros((frames, bins_per_frame));
    for (t, row) in rows.into_iter().enumerate() {
        for (f, c) in row.into_iter().enumerate() {
            bins[[t, f]] = c;
        }
    }
    Spectrogram::from_parts(bins, n, hop, fs, cfg.window, x.len())
}

/// Summed analysis-times-synthesis window over the output span.
fn overlap_envelope(window: WindowKind, n: usize, hop: usize, frames: usize, out_len: usize) -> Vec<f64> {
    let wa = window.analysis(n);
    let ws = window.synthesis(n);
    let pad = (n - hop) as isize;
    let mut env = vec![0.0; out_len];
    for t in 0..frames {
        let start = (t * hop) as isize - pad;
        for i in 0..n {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < out_len {
                env[idx as usize] += wa[i] * ws[i];
            }
        }
    }
    env
}

/// Inverse STFT with the default envelope normalization.
pub fn istft(s: &Spectrogram) -> Result<TimeSignal> {
    istft_with(s, OverlapNorm::Envelope)
}

/// Inverse STFT: per-frame inverse DFT (conjugate-symmetric completion),
/// synthesis window, overlap-add at the analysis hop, then normalization.
pub fn istft_with(s: &Spectrogram, norm: OverlapNorm) -> Result<TimeSignal> {
    let n = s.frame_len;
    let hop = s.hop;
    let frames = s.frames();
    let out_len = s.signal_len;
    let env = overlap_envelope(s.window, n, hop, frames, out_len);

    let scale: Vec<f64> = match norm {
        OverlapNorm::Envelope => {
            let peak = env.iter().cloned().fold(0.0, f64::max);
            if let Some(i) = env.iter().position(|&e| e <= 1e-9 * peak) {
                return Err(Error::Config(format!(
                    "{:?} window with frame {n} / hop {hop} leaves sample {i} uncovered",
                    s.window
                )));
            }
            env.iter().map(|e| 1.0 / e).collect()
        }
        OverlapNorm::Constant => {
            // steady-state envelope: with the edge padding every sample of a
            // virtual record is fully covered, so a couple of frame lengths suffice
            let span = 2 * n + hop;
            let steady = overlap_envelope(s.window, n, hop, frame_count(span, n, hop), span);
            let lo = steady.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = steady.iter().cloned().fold(0.0, f64::max);
            let mean = steady.iter().sum::<f64>() / steady.len() as f64;
            if mean <= 0.0 || (hi - lo) / mean > 0.01 {
                return Err(Error::Config(format!(
                    "{:?} window with frame {n} / hop {hop} does not overlap-add to a constant \
                     (ripple {:.2}%)",
                    s.window,
                    if mean > 0.0 { 100.0 * (hi - lo) / mean } else { f64::INFINITY }
                )));
            }
            let a = match s.window {
                WindowKind::Hann => 0.5 * n as f64 / hop as f64,
                _ => mean,
            };
            vec![1.0 / a; out_len]
        }
    };

    let ifft = plan(n, true);
    let ws = s.window.synthesis(n);
    let half = s.freq_bins();
    let frames_td: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map(|t| {
            let row = s.bins.index_axis(Axis(0), t);
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for k in 0..half {
                buf[k] = row[k];
            }
            for k in half..n {
                buf[k] = row[n - k].conj();
            }
            ifft.process(&mut buf);
            buf.iter()
                .zip(&ws)
                .map(|(c, w)| c.re / n as f64 * w)
                .collect()
        })
        .collect();

    let pad = (n - hop) as isize;
    let mut out = vec![0.0; out_len];
    for (t, frame) in frames_td.iter().enumerate() {
        let start = (t * hop) as isize - pad;
        for (i, v) in frame.iter().enumerate() {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < out_len {
                out[idx as usize] += v;
            }
        }
    }
    for (o, sc) in out.iter_mut().zip(&scale) {
        *o *= sc;
    }
    TimeSignal::new(out, s.sample_rate)
}

/// `max(20 log10 |X|, floor_db)` per bin.
pub fn log_magnitude(s: &Spectrogram, floor_db: f64) -> Array2<f64> {
    s.bins.mapv(|c| {
        let m = c.norm();
        if m > 0.0 {
            (20.0 * m.log10()).max(floor_db)
        } else {
            floor_db
        }
    })
}
