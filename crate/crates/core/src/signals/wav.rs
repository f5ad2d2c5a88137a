use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use super::TimeSignal;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BitDepth {
    #[default]
    Int16,
    Float32,
}

/// Reads the first channel of a 16-bit PCM or 32-bit float WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<TimeSignal> {
    let path = path.as_ref();
    let mut channels = read_wav_channels(path)?;
    if channels.len() > 1 {
        log::warn!(
            "{} has {} channels; using channel 0",
            path.display(),
            channels.len()
        );
    }
    Ok(channels.swap_remove(0))
}

/// Reads every channel of a 16-bit PCM or 32-bit float WAV file.
pub fn read_wav_channels(path: impl AsRef<Path>) -> Result<Vec<TimeSignal>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = WavReader::new(std::io::BufReader::new(file))
        .map_err(|e| Error::format(path, e.to_string()))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, e.to_string()))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, e.to_string()))?,
        (SampleFormat::Int, bits) => {
            return Err(Error::format(
                path,
                format!("unsupported encoding PCM {bits}-bit integer"),
            ))
        }
        (SampleFormat::Float, bits) => {
            return Err(Error::format(
                path,
                format!("unsupported encoding IEEE float {bits}-bit"),
            ))
        }
    };
    let frames = interleaved.len() / channels;
    (0..channels)
        .map(|c| {
            let samples = (0..frames).map(|i| interleaved[i * channels + c]).collect();
            TimeSignal::new(samples, spec.sample_rate)
                .map_err(|e| Error::format(path, e.to_string()))
        })
        .collect()
}

/// Writes a mono WAV file. 16-bit output is clipped to `[-1, 1)`.
pub fn write_wav(path: impl AsRef<Path>, x: &TimeSignal, bit_depth: BitDepth) -> Result<()> {
    write_wav_channels(path, std::slice::from_ref(x), bit_depth)
}

/// Writes an interleaved multi-channel WAV file.
pub fn write_wav_channels(
    path: impl AsRef<Path>,
    channels: &[TimeSignal],
    bit_depth: BitDepth,
) -> Result<()> {
    let path = path.as_ref();
    let first = channels
        .first()
        .ok_or_else(|| Error::param("channels", "nothing to write"))?;
    let refs: Vec<&TimeSignal> = channels.iter().collect();
    super::check_compatible(&refs)?;
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: first.sample_rate(),
        bits_per_sample: match bit_depth {
            BitDepth::Int16 => 16,
            BitDepth::Float32 => 32,
        },
        sample_format: match bit_depth {
            BitDepth::Int16 => SampleFormat::Int,
            BitDepth::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for i in 0..first.len() {
        for ch in channels {
            let v = ch.samples()[i];
            let r = match bit_depth {
                BitDepth::Int16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(q)
                }
                BitDepth::Float32 => writer.write_sample(v as f32),
            };
            r.map_err(|e| wav_error(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}
