//! Spectrogram dumps: `UASPEC1` binary, magnitude CSV and 8-bit PGM.
//!
//! Binary layout (little-endian): magic `UASPEC1`, then `u32` T, F, frame_len,
//! hop, sample_rate, a `u8` window code, then `T*F` complex64 pairs (two `f32`)
//! row-major by frame.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use super::{Spectrogram, WindowKind};
use crate::error::{Error, Result};

const MAGIC: &[u8; 7] = b"UASPEC1";

pub fn write_spectrogram(path: impl AsRef<Path>, s: &Spectrogram) -> Result<()> {
    let path = path.as_ref();
    let (t, f) = s.shape();
    let mut buf = Vec::with_capacity(7 + 21 + t * f * 8);
    buf.extend_from_slice(MAGIC);
    for v in [t, f, s.frame_len(), s.hop(), s.sample_rate() as usize] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.push(s.window().code());
    for c in s.bins().iter() {
        buf.extend_from_slice(&(c.re as f32).to_le_bytes());
        buf.extend_from_slice(&(c.im as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a `UASPEC1` dump. The original signal length is not stored, so the
/// result reconstructs `(T - 1) * hop` samples.
pub fn read_spectrogram(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    if data.len() < 28 || &data[..7] != MAGIC {
        return Err(Error::format(path, "missing UASPEC1 header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(data[o..o + 4].try_into().unwrap()) as usize;
    let (t, f, frame_len, hop, rate) = (u32_at(7), u32_at(11), u32_at(15), u32_at(19), u32_at(23));
    let window = WindowKind::from_code(data[27])
        .ok_or_else(|| Error::format(path, format!("unknown window code {}", data[27])))?;
    let body = &data[28..];
    if body.len() != t * f * 8 {
        return Err(Error::format(
            path,
            format!("expected {} payload bytes, found {}", t * f * 8, body.len()),
        ));
    }
    let values: Vec<Complex64> = body
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    let bins = Array2::from_shape_vec((t, f), values).map_err(|e| Error::format(path, e.to_string()))?;
    Spectrogram::from_parts(bins, frame_len, hop, rate as u32, window, t.saturating_sub(1) * hop)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// One line per frame, comma-separated magnitudes.
pub fn write_magnitude_csv(path: impl AsRef<Path>, s: &Spectrogram) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in s.bins().rows() {
        let line: Vec<String> = row.iter().map(|c| format!("{:e}", c.norm())).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Binary PGM, width = frames, height = bins, highest frequency on top; the
/// top `dynamic_db` decibels are mapped linearly onto 0..=255.
pub fn write_magnitude_pgm(path: impl AsRef<Path>, s: &Spectrogram, dynamic_db: f64) -> Result<()> {
    let db = super::log_magnitude(s, -400.0);
    let peak = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (t, f) = db.dim();
    let mut pixels = Vec::with_capacity(t * f);
    for k in (0..f).rev() {
        for frame in 0..t {
            let v = ((db[[frame, k]] - (peak - dynamic_db)) / dynamic_db).clamp(0.0, 1.0);
            pixels.push((v * 255.0).round() as u8);
        }
    }
    write_pgm(path.as_ref(), t, f, 255, &pixels)
}

pub(crate) fn write_pgm(path: &Path, width: usize, height: usize, maxval: u16, pixels: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write!(f, "P5\n{width} {height}\n{maxval}\n").map_err(|e| Error::io(path, e))?;
    f.write_all(pixels).map_err(|e| Error::io(path, e))
}
