//! Binary time-frequency masks from cluster assignments or known sources, and
//! dominance labels for training.

use std::path::Path;

use ndarray::Array2;
use rustfft::num_complex::Complex64;

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};
use crate::tfr::Spectrogram;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    cells: Array2<u8>,
}

impl BinaryMask {
    /// Rejects any cell outside `{0, 1}`.
    pub fn new(cells: Array2<u8>) -> Result<Self> {
        if cells.iter().any(|&v| v > 1) {
            return Err(Error::param("mask", "cells must be 0 or 1"));
        }
        Ok(Self { cells })
    }

    pub fn ones(frames: usize, bins: usize) -> Self {
        Self {
            cells: Array2::ones((frames, bins)),
        }
    }

    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self {
            cells: Array2::zeros((frames, bins)),
        }
    }

    pub fn cells(&self) -> &Array2<u8> {
        &self.cells
    }

    pub fn shape(&self) -> (usize, usize) {
        self.cells.dim()
    }

    pub fn count_ones(&self) -> usize {
        self.cells.iter().filter(|&&v| v == 1).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            cells: self.cells.mapv(|v| 1 - v),
        }
    }

    /// Binary PGM with maxval 1: width = frames, height = bins, top row is the
    /// highest frequency.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let (t, f) = self.shape();
        let mut pixels = Vec::with_capacity(t * f);
        for k in (0..f).rev() {
            for frame in 0..t {
                pixels.push(self.cells[[frame, k]]);
            }
        }
        crate::tfr::write_pgm(path.as_ref(), t, f, 1, &pixels)
    }

    /// One line per frame.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::with_capacity(self.cells.len() * 2);
        for row in self.cells.rows() {
            let line: Vec<&str> = row.iter().map(|&v| if v == 1 { "1" } else { "0" }).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    /// `(T*F) x C`, one 1 per row with positive weight.
    pub onehot: Array2<f64>,
    /// 1 for labelled bins, 0 for bins under the energy floor.
    pub weights: Vec<f64>,
}

impl LabelMatrix {
    pub fn sources(&self) -> usize {
        self.onehot.ncols()
    }
}

/// One mask per cluster, row index `t * F + f`.
pub fn masks_from_assignment(assign: &ClusterAssignment, frames: usize, bins: usize) -> Result<Vec<BinaryMask>> {
    if assign.labels.len() != frames * bins {
        return Err(Error::param(
            "assignment",
            format!("{} labels for a {frames}x{bins} plane", assign.labels.len()),
        ));
    }
    Ok(masks_from_labels(&assign.labels, assign.k(), frames, bins))
}

pub(crate) fn masks_from_labels(labels: &[usize], k: usize, frames: usize, bins: usize) -> Vec<BinaryMask> {
    (0..k)
        .map(|c| BinaryMask {
            cells: Array2::from_shape_fn((frames, bins), |(t, f)| (labels[t * bins + f] == c) as u8),
        })
        .collect()
}

pub fn apply_mask(mask: &BinaryMask, x: &Spectrogram) -> Result<Spectrogram> {
    if mask.shape() != x.shape() {
        return Err(Error::param(
            "mask",
            format!("mask is {:?}, spectrogram is {:?}", mask.shape(), x.shape()),
        ));
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut bins = x.bins().clone();
    ndarray::Zip::from(&mut bins).and(&mask.cells).for_each(|b, &m| {
        if m == 0 {
            *b = zero;
        }
    });
    x.with_bins(bins)
}

fn check_sources(source_specs: &[Spectrogram]) -> Result<()> {
    let first = source_specs
        .first()
        .ok_or_else(|| Error::param("sources", "at least one source is required"))?;
    if let Some((i, s)) = source_specs.iter().enumerate().find(|(_, s)| !first.same_layout(s)) {
        return Err(Error::param(
            "sources",
            format!("source {i} has shape {:?}, source 0 has {:?}", s.shape(), first.shape()),
        ));
    }
    Ok(())
}

/// Dominance labels: each bin goes to the source with the largest magnitude,
/// ties to the lowest index. Bins whose mixture magnitude lies more than
/// `|floor_db|` below the loudest mixture bin get weight 0 and an all-zero row.
pub fn ideal_labels(source_specs: &[Spectrogram], floor_db: f64) -> Result<LabelMatrix> {
    check_sources(source_specs)?;
    let (t, f) = source_specs[0].shape();
    let c = source_specs.len();
    let n = t * f;
    let mixture = Spectrogram::sum(source_specs)?;
    let mix_mag: Vec<f64> = mixture.bins().iter().map(|z| z.norm()).collect();
    let peak = mix_mag.iter().cloned().fold(0.0, f64::max);
    let threshold = peak * 10f64.powf(-floor_db.abs() / 20.0);
    let mags: Vec<Array2<f64>> = source_specs.iter().map(|s| s.magnitudes()).collect();

    let mut onehot = Array2::zeros((n, c));
    let mut weights = vec![0.0; n];
    for row in 0..n {
        let (tt, ff) = (row / f, row % f);
        if !(mix_mag[row] > 0.0 && mix_mag[row] >= threshold) {
            continue;
        }
        let mut best = 0;
        for (j, m) in mags.iter().enumerate().skip(1) {
            if m[[tt, ff]] > mags[best][[tt, ff]] {
                best = j;
            }
        }
        onehot[[row, best]] = 1.0;
        weights[row] = 1.0;
    }
    Ok(LabelMatrix { onehot, weights })
}

/// Oracle mask for one source: its dominance column reshaped to `T x F`.
pub fn ideal_binary_mask(source_specs: &[Spectrogram], target: usize, floor_db: f64) -> Result<BinaryMask> {
    if target >= source_specs.len() {
        return Err(Error::param(
            "target",
            format!("{target} but only {} sources", source_specs.len()),
        ));
    }
    let labels = ideal_labels(source_specs, floor_db)?;
    let (t, f) = source_specs[0].shape();
    Ok(BinaryMask {
        cells: Array2::from_shape_fn((t, f), |(tt, ff)| labels.onehot[[tt * f + ff, target]] as u8),
    })
}
