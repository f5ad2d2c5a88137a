//! Geometric clustering features from multi-channel spectrograms: magnitude
//! ratios and frequency-normalized inter-channel phase differences.
//!
//! Rows are laid out bin-major per frame (`row = t * F + f`). Each matrix
//! carries a weight per row; bins far below the loudest bin get weight zero
//! and are ignored when fitting clusters.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tfr::Spectrogram;

/// Bins this many dB below the loudest one are flagged low-energy.
pub const DEFAULT_FLOOR_DB: f64 = -40.0;
/// Upper bound on the two-channel magnitude ratio where the reference is ~0.
pub const ALPHA_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub ref_channel: usize,
    /// Largest distance between the reference sensor and any other, in meters.
    pub d_max: f64,
    /// Propagation speed in m/s.
    pub sound_speed: f64,
    pub floor_db: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            ref_channel: 0,
            d_max: 1.0,
            sound_speed: 1500.0,
            floor_db: DEFAULT_FLOOR_DB,
        }
    }
}

impl FeatureConfig {
    /// Phase weight `4 pi d_max / c`, in seconds.
    pub fn beta(&self) -> f64 {
        4.0 * PI * self.d_max / self.sound_speed
    }

    fn validate(&self, channels: usize) -> Result<()> {
        if self.ref_channel >= channels {
            return Err(Error::param(
                "ref_channel",
                format!("{} but only {channels} channels", self.ref_channel),
            ));
        }
        if !(self.d_max > 0.0) {
            return Err(Error::param("d_max", "must be positive"));
        }
        if !(self.sound_speed > 0.0) {
            return Err(Error::param("sound_speed", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Array2<f64>,
    /// 1 for usable bins, 0 for low-energy ones.
    pub weights: Vec<f64>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for (i, row) in self.rows.rows().into_iter().enumerate() {
            out.push_str(&i.to_string());
            for v in row {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn check_shapes(specs: &[&Spectrogram]) -> Result<()> {
    let first = specs[0];
    for (i, s) in specs.iter().enumerate().skip(1) {
        if !first.same_layout(s) {
            return Err(Error::param(
                "spectrograms",
                format!(
                    "channel {i} has shape {:?}, channel 0 has {:?}",
                    s.shape(),
                    first.shape()
                ),
            ));
        }
    }
    Ok(())
}

fn energy_weights(norm: &Array2<f64>, floor_db: f64) -> Vec<f64> {
    let peak = norm.iter().cloned().fold(0.0, f64::max);
    let threshold = peak * 10f64.powf(floor_db / 20.0);
    norm.iter()
        .map(|&a| if a > 0.0 && a >= threshold { 1.0 } else { 0.0 })
        .collect()
}

/// `A(t, f) = sqrt(sum_j |X_j(t, f)|^2)`.
pub fn magnitude_normalizer(specs: &[Spectrogram]) -> Result<Array2<f64>> {
    let first = specs
        .first()
        .ok_or_else(|| Error::param("spectrograms", "at least one channel is required"))?;
    let refs: Vec<&Spectrogram> = specs.iter().collect();
    check_shapes(&refs)?;
    let mut acc = Array2::<f64>::zeros(first.shape());
    for s in specs {
        acc.zip_mut_with(s.bins(), |a, c| *a += c.norm_sqr());
    }
    acc.mapv_inplace(f64::sqrt);
    Ok(acc)
}

/// Two-channel `[alpha, phi]` rows: `alpha = |X2| / |X1|` and
/// `phi = arg(X2 / X1) / (2 pi f)` with `f` in Hz.
///
/// At DC, or where `|X1|` vanishes, `phi` is 0 and `alpha` is capped at [`ALPHA_CAP`].
pub fn features_two_channel(x1: &Spectrogram, x2: &Spectrogram) -> Result<FeatureMatrix> {
    check_shapes(&[x1, x2])?;
    let (t_len, f_len) = x1.shape();
    let mut rows = Array2::zeros((t_len * f_len, 2));
    for t in 0..t_len {
        for f in 0..f_len {
            let a = x1.bins()[[t, f]];
            let b = x2.bins()[[t, f]];
            let r = t * f_len + f;
            let ma = a.norm();
            let mb = b.norm();
            let tiny = ma <= f64::MIN_POSITIVE;
            rows[[r, 0]] = if tiny {
                if mb > 0.0 {
                    ALPHA_CAP
                } else {
                    0.0
                }
            } else {
                (mb / ma).min(ALPHA_CAP)
            };
            let hz = x1.bin_frequency(f);
            rows[[r, 1]] = if f == 0 || tiny || mb == 0.0 {
                0.0
            } else {
                (b / a).arg() / (2.0 * PI * hz)
            };
        }
    }
    let pair = [x1.clone(), x2.clone()];
    let weights = energy_weights(&magnitude_normalizer(&pair)?, DEFAULT_FLOOR_DB);
    Ok(FeatureMatrix { rows, weights })
}

/// Unit-norm complex feature per bin, emitted as `2n` reals (re/im interleaved):
/// `|X_i| / A * exp(j arg(X_i / X_B) / (beta f))`.
pub fn features_multi_channel(specs: &[Spectrogram], cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    if specs.len() < 2 {
        return Err(Error::param(
            "spectrograms",
            format!("need at least 2 channels, got {}", specs.len()),
        ));
    }
    cfg.validate(specs.len())?;
    features_normalized(specs, cfg)
}

/// Same as [`features_multi_channel`] but also accepts a single channel, for
/// which every usable row is the constant `[1, 0]`.
pub(crate) fn features_normalized(specs: &[Spectrogram], cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let refs: Vec<&Spectrogram> = specs.iter().collect();
    check_shapes(&refs)?;
    let norm = magnitude_normalizer(specs)?;
    let n = specs.len();
    let (t_len, f_len) = specs[0].shape();
    let beta = cfg.beta();
    let reference = &specs[cfg.ref_channel];
    let mut rows = Array2::zeros((t_len * f_len, 2 * n));
    for t in 0..t_len {
        for f in 0..f_len {
            let a = norm[[t, f]];
            if a == 0.0 {
                continue;
            }
            let r = t * f_len + f;
            let xb = reference.bins()[[t, f]];
            let hz = reference.bin_frequency(f);
            for (i, s) in specs.iter().enumerate() {
                let xi = s.bins()[[t, f]];
                let mag = xi.norm();
                let phase = if f == 0 || mag == 0.0 || xb.norm() == 0.0 {
                    0.0
                } else {
                    (xi / xb).arg() / (beta * hz)
                };
                rows[[r, 2 * i]] = mag / a * phase.cos();
                rows[[r, 2 * i + 1]] = mag / a * phase.sin();
            }
        }
    }
    let weights = energy_weights(&norm, cfg.floor_db);
    Ok(FeatureMatrix { rows, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tfr::WindowKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rustfft::num_complex::Complex64;

    fn random_spec(t: usize, n: usize, seed: u64) -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = n / 2 + 1;
        let bins = Array2::from_shape_fn((t, f), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        Spectrogram::from_parts(bins, n, n / 4, 8000, WindowKind::Hann, t * n / 4).unwrap()
    }

    #[test]
    fn identical_channels_give_unit_ratio() {
        let x = random_spec(5, 64, 1);
        let fm = features_two_channel(&x, &x).unwrap();
        for row in fm.rows.rows() {
            assert!((row[0] - 1.0).abs() < 1e-12);
            assert_eq!(row[1], 0.0);
        }
    }

    #[test]
    fn pure_gain_channel() {
        let x = random_spec(5, 64, 2);
        let fm = features_two_channel(&x, &x.scaled(2.0)).unwrap();
        for row in fm.rows.rows() {
            assert!((row[0] - 2.0).abs() < 1e-12);
            assert!(row[1].abs() < 1e-15);
        }
    }

    #[test]
    fn circular_delay_gives_constant_normalized_phase() {
        let n = 64;
        let x1 = random_spec(4, n, 3);
        let tau = 1.0;
        let fs = 8000.0;
        let x2 = x1
            .with_bins(Array2::from_shape_fn(x1.shape(), |(t, k)| {
                x1.bins()[[t, k]] * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * tau / n as f64)
            }))
            .unwrap();
        let fm = features_two_channel(&x1, &x2).unwrap();
        let f_len = x1.freq_bins();
        let expected = -tau / fs;
        for t in 0..4 {
            for k in 1..f_len - 1 {
                let phi = fm.rows[[t * f_len + k, 1]];
                assert!((phi - expected).abs() <= 0.05 * expected.abs(), "bin {k}: {phi}");
            }
        }
    }

    #[test]
    fn no_nan_with_silent_bins() {
        let x = random_spec(3, 32, 4);
        let mut z = x.bins().clone();
        z.row_mut(1).fill(Complex64::new(0.0, 0.0));
        let silent = x.with_bins(z).unwrap();
        let fm = features_two_channel(&silent, &x).unwrap();
        assert!(fm.rows.iter().all(|v| v.is_finite()));
        let mf = features_multi_channel(&[silent.clone(), silent], &FeatureConfig::default()).unwrap();
        assert!(mf.rows.iter().all(|v| v.is_finite()));
        let f = 17;
        for k in 0..f {
            assert_eq!(mf.weights[f + k], 0.0);
            assert!(mf.rows.row(f + k).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = random_spec(3, 32, 5);
        let b = random_spec(4, 32, 6);
        assert!(matches!(features_two_channel(&a, &b), Err(Error::Parameter { .. })));
    }

    #[test]
    fn normalizer_cases() {
        let x = random_spec(3, 32, 7);
        let a = magnitude_normalizer(std::slice::from_ref(&x)).unwrap();
        for (p, q) in a.iter().zip(x.magnitudes().iter()) {
            assert!((p - q).abs() <= 1e-15 * q.max(1.0));
        }
        let a2 = magnitude_normalizer(&[x.clone(), x.clone()]).unwrap();
        for (p, q) in a2.iter().zip(x.magnitudes().iter()) {
            assert!((p - q * 2f64.sqrt()).abs() < 1e-12);
        }
        let y = random_spec(3, 32, 8);
        let a3 = magnitude_normalizer(&[x.clone(), y.clone()]).unwrap();
        for ((p, cx), cy) in a3.iter().zip(x.bins().iter()).zip(y.bins().iter()) {
            assert!((p * p - (cx.norm_sqr() + cy.norm_sqr())).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_rows_are_unit_or_flagged() {
        let specs: Vec<_> = (0..3).map(|i| random_spec(4, 64, 10 + i)).collect();
        let fm = features_multi_channel(&specs, &FeatureConfig::default()).unwrap();
        assert_eq!(fm.dim(), 6);
        for (row, w) in fm.rows.rows().into_iter().zip(&fm.weights) {
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12 || (*w == 0.0 && n == 0.0));
        }
    }

    #[test]
    fn identical_channels_give_identical_rows() {
        let x = random_spec(4, 64, 20);
        let fm = features_multi_channel(&[x.clone(), x], &FeatureConfig::default()).unwrap();
        let s = 0.5f64.sqrt();
        for row in fm.rows.rows() {
            let expect = [s, 0.0, s, 0.0];
            for (v, e) in row.iter().zip(expect) {
                assert!((v - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_config_rejected() {
        let x = random_spec(2, 32, 30);
        let cfg = FeatureConfig {
            ref_channel: 2,
            ..Default::default()
        };
        assert!(features_multi_channel(&[x.clone(), x.clone()], &cfg).is_err());
        assert!(features_multi_channel(&[x], &FeatureConfig::default()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn normalized_rows_are_scale_invariant(seed in 0u64..1000, gain in 0.01f64..100.0) {
            let specs: Vec<_> = (0..2).map(|i| random_spec(3, 32, seed * 7 + i)).collect();
            let scaled: Vec<_> = specs.iter().map(|s| s.scaled(gain)).collect();
            let cfg = FeatureConfig::default();
            let a = features_multi_channel(&specs, &cfg).unwrap();
            let b = features_multi_channel(&scaled, &cfg).unwrap();
            for (p, q) in a.rows.iter().zip(b.rows.iter()) {
                proptest::prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
