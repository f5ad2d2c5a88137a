//! Time-domain signals: synthesis, normalization, mixing and noise injection.
//!
//! Every randomized operation takes an explicit seed and is a pure function of
//! its arguments.

mod lfm;
pub mod synth;
mod wav;

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lfm::{gen_lfm, LfmSpec};
pub use synth::GeneratorSpec;
pub use wav::{read_wav, read_wav_channels, write_wav, write_wav_channels, BitDepth};

/// Peaks below this are treated as silence by [`normalize`].
const SILENCE_PEAK: f64 = 1e-12;

/// A sampled real waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl TimeSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::param("sample_rate", "must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::param(
                "samples",
                format!("non-finite value at index {i}"),
            ));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f64) -> TimeSignal {
        TimeSignal {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Truncates or zero-pads to `len` samples.
    pub fn resized(&self, len: usize) -> TimeSignal {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        TimeSignal {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Elementwise sum; both signals must share rate and length.
    pub fn add(&self, other: &TimeSignal) -> Result<TimeSignal> {
        check_compatible(&[self, other])?;
        Ok(TimeSignal {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    pub fn sub(&self, other: &TimeSignal) -> Result<TimeSignal> {
        check_compatible(&[self, other])?;
        Ok(TimeSignal {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    /// Writes one sample per line after a `# sample_rate=<int>` comment.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::with_capacity(self.samples.len() * 12);
        out.push_str(&format!("# sample_rate={}\n", self.sample_rate));
        for s in &self.samples {
            out.push_str(&format!("{s:e}\n"));
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<TimeSignal> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty signal dump"))?;
        let rate = header
            .trim_start_matches('#')
            .trim()
            .strip_prefix("sample_rate=")
            .and_then(|r| r.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::format(path, "missing `# sample_rate=<int>` header"))?;
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v = line
                .parse::<f64>()
                .map_err(|_| Error::format(path, format!("bad sample on line {}", i + 2)))?;
            samples.push(v);
        }
        TimeSignal::new(samples, rate)
    }
}

pub(crate) fn check_compatible(signals: &[&TimeSignal]) -> Result<()> {
    let Some(first) = signals.first() else {
        return Ok(());
    };
    for (i, s) in signals.iter().enumerate().skip(1) {
        if s.sample_rate != first.sample_rate {
            return Err(Error::param(
                "sources",
                format!(
                    "signal {i} has sample rate {} but signal 0 has {}",
                    s.sample_rate, first.sample_rate
                ),
            ));
        }
        if s.len() != first.len() {
            return Err(Error::param(
                "sources",
                format!(
                    "signal {i} has {} samples but signal 0 has {}",
                    s.len(),
                    first.len()
                ),
            ));
        }
    }
    Ok(())
}

/// Removes the mean and scales the peak magnitude to one.
///
/// Signals whose de-meaned peak is below `1e-12` come back as all zeros.
pub fn normalize(x: &TimeSignal) -> TimeSignal {
    let n = x.len().max(1) as f64;
    let mean = x.samples.iter().sum::<f64>() / n;
    let centered: Vec<f64> = x.samples.iter().map(|s| s - mean).collect();
    let peak = centered.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let samples = if peak < SILENCE_PEAK {
        vec![0.0; centered.len()]
    } else {
        centered.into_iter().map(|s| s / peak).collect()
    };
    TimeSignal {
        samples,
        sample_rate: x.sample_rate,
    }
}

/// Mixing coefficients or matrix plus optional additive noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    /// Single-observation gains, one per source.
    #[serde(default)]
    pub coefficients: Vec<f64>,
    /// `R x C` instantaneous mixing matrix, row-major.
    #[serde(default)]
    pub mixing_matrix: Option<Vec<Vec<f64>>>,
    /// Noise level relative to each clean observation; `None` or `+inf` adds nothing.
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
}

impl MixSpec {
    pub fn coefficients(coefficients: Vec<f64>) -> Self {
        Self {
            coefficients,
            mixing_matrix: None,
            noise_snr_db: None,
        }
    }

    pub fn matrix(mixing_matrix: Vec<Vec<f64>>) -> Self {
        Self {
            coefficients: Vec::new(),
            mixing_matrix: Some(mixing_matrix),
            noise_snr_db: None,
        }
    }

    pub fn with_noise(mut self, snr_db: f64) -> Self {
        self.noise_snr_db = Some(snr_db);
        self
    }

    /// `count` gains drawn uniformly from `[3/4, 1]`.
    pub fn random_coefficients(count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::coefficients(random_gains(count, &mut rng))
    }

    /// Rows of the effective mixing matrix, whichever form was given.
    pub fn rows(&self, sources: usize) -> Result<Vec<Vec<f64>>> {
        match &self.mixing_matrix {
            Some(m) => {
                if m.is_empty() {
                    return Err(Error::param("mixing_matrix", "has no rows"));
                }
                for (r, row) in m.iter().enumerate() {
                    if row.len() != sources {
                        return Err(Error::param(
                            "mixing_matrix",
                            format!(
                                "row {r} has {} columns but there are {sources} sources",
                                row.len()
                            ),
                        ));
                    }
                }
                Ok(m.clone())
            }
            None => {
                if self.coefficients.len() != sources {
                    return Err(Error::param(
                        "coefficients",
                        format!(
                            "{} coefficients given for {sources} sources",
                            self.coefficients.len()
                        ),
                    ));
                }
                Ok(vec![self.coefficients.clone()])
            }
        }
    }
}

pub(crate) fn random_gains(count: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..count).map(|_| rng.random_range(0.75..=1.0)).collect()
}

/// Random `rows x cols` matrix with entries in `[0.2, 1]` whose columns point in
/// pairwise distinct directions (angle at least `min_angle` radians).
pub fn random_mixing_matrix(rows: usize, cols: usize, min_angle: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'outer: for _ in 0..10_000 {
        let columns: Vec<Vec<f64>> = (0..cols)
            .map(|_| (0..rows).map(|_| rng.random_range(0.2..=1.0)).collect())
            .collect();
        for i in 0..cols {
            for j in i + 1..cols {
                let dot: f64 = columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum();
                let ni = columns[i].iter().map(|a| a * a).sum::<f64>().sqrt();
                let nj = columns[j].iter().map(|a| a * a).sum::<f64>().sqrt();
                let angle = (dot / (ni * nj)).clamp(-1.0, 1.0).acos();
                if angle < min_angle {
                    continue 'outer;
                }
            }
        }
        return (0..rows)
            .map(|r| columns.iter().map(|c| c[r]).collect())
            .collect();
    }
    panic!("could not draw a mixing matrix with column separation {min_angle}");
}

/// Instantaneously mixes `sources` into one observation per mixing row.
pub fn mix(sources: &[TimeSignal], spec: &MixSpec, seed: u64) -> Result<Vec<TimeSignal>> {
    if sources.is_empty() {
        return Err(Error::param("sources", "at least one source is required"));
    }
    let refs: Vec<&TimeSignal> = sources.iter().collect();
    check_compatible(&refs)?;
    let rows = spec.rows(sources.len())?;
    let len = sources[0].len();
    let rate = sources[0].sample_rate;

    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let mut samples = vec![0.0; len];
        for (gain, src) in row.iter().zip(sources) {
            for (o, s) in samples.iter_mut().zip(&src.samples) {
                *o += gain * s;
            }
        }
        let clean = TimeSignal::new(samples, rate)?;
        let noise_seed = seeder.next_u64();
        let obs = match spec.noise_snr_db {
            Some(snr) => add_awgn(&clean, snr, noise_seed)?,
            None => clean,
        };
        out.push(obs);
    }
    Ok(out)
}

/// Adds white Gaussian noise whose power is `power(x) / 10^(snr_db / 10)`.
///
/// `snr_db = +inf` returns the input unchanged.
pub fn add_awgn(x: &TimeSignal, snr_db: f64, seed: u64) -> Result<TimeSignal> {
    if snr_db == f64::INFINITY {
        return Ok(x.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::param("snr_db", format!("{snr_db} is not a usable SNR")));
    }
    let power = x.power();
    if power <= 0.0 {
        return Err(Error::param(
            "x",
            "signal is silent; SNR is undefined",
        ));
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = x
        .samples
        .iter()
        .map(|s| {
            let n: f64 = rng.sample(StandardNormal);
            s + sigma * n
        })
        .collect();
    TimeSignal::new(samples, x.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(len: usize, seed: u64) -> TimeSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        TimeSignal::new(s, 8000).unwrap()
    }

    fn snr_db(clean: &TimeSignal, noisy: &TimeSignal) -> f64 {
        let n = noisy.sub(clean).unwrap();
        10.0 * (clean.power() / n.power()).log10()
    }

    #[test]
    fn rejects_non_finite_samples() {
        assert!(TimeSignal::new(vec![0.0, f64::NAN], 100).is_err());
        assert!(TimeSignal::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn normalize_constant_gives_zeros() {
        let x = TimeSignal::new(vec![3.5; 100], 8000).unwrap();
        assert!(normalize(&x).samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn normalize_fixed_point() {
        let x = TimeSignal::new(vec![1.0, -1.0, 0.5, -0.5], 8000).unwrap();
        let y = normalize(&x);
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_noise_moments() {
        let x = noise(10_000, 3).scaled(0.3);
        let y = normalize(&x);
        let mean = y.samples().iter().sum::<f64>() / y.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert_eq!(y.peak(), 1.0);
    }

    #[test]
    fn mix_identity_and_linearity() {
        let s = noise(256, 1);
        let out = mix(std::slice::from_ref(&s), &MixSpec::coefficients(vec![1.0]), 0).unwrap();
        assert_eq!(out[0], s);

        let out = mix(&[s.clone(), s.clone()], &MixSpec::coefficients(vec![0.5, 0.5]), 0).unwrap();
        for (a, b) in out[0].samples().iter().zip(s.samples()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mix_matrix_shapes() {
        let a = noise(64, 1);
        let b = noise(64, 2);
        let m = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]];
        let out = mix(&[a.clone(), b.clone()], &MixSpec::matrix(m), 0).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], a);
        assert_eq!(out[1], b.scaled(2.0));

        let bad = MixSpec::matrix(vec![vec![1.0]]);
        assert!(mix(&[a.clone(), b.clone()], &bad, 0).is_err());
    }

    #[test]
    fn mix_rejects_mismatched_sources() {
        let a = noise(64, 1);
        let b = noise(65, 2);
        let err = mix(&[a, b], &MixSpec::coefficients(vec![1.0, 1.0]), 0).unwrap_err();
        assert!(matches!(err, Error::Parameter { .. }));
    }

    #[test]
    fn random_coefficients_in_range() {
        let spec = MixSpec::random_coefficients(1000, 42);
        assert!(spec.coefficients.iter().all(|&a| (0.75..=1.0).contains(&a)));
        let lo = spec.coefficients.iter().cloned().fold(1.0, f64::min);
        let hi = spec.coefficients.iter().cloned().fold(0.0, f64::max);
        assert!(lo < 0.76 && hi > 0.99);
    }

    #[test]
    fn awgn_infinite_snr_is_identity() {
        let x = noise(100, 5);
        assert_eq!(add_awgn(&x, f64::INFINITY, 9).unwrap(), x);
    }

    #[test]
    fn awgn_silent_input_errors() {
        let x = TimeSignal::zeros(100, 8000).unwrap();
        assert!(add_awgn(&x, 10.0, 1).is_err());
    }

    #[test]
    fn awgn_hits_target_snr() {
        // 10 s at 8 kHz
        let t: Vec<f64> = (0..80_000)
            .map(|n| (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 8000.0).sin())
            .collect();
        let x = TimeSignal::new(t, 8000).unwrap();
        for target in [0.0, 10.0, 20.0, 40.0] {
            let y = add_awgn(&x, target, 7).unwrap();
            assert!((snr_db(&x, &y) - target).abs() < 0.3, "target {target}");
        }
        let y = add_awgn(&x, 0.0, 11).unwrap();
        let ratio = y.sub(&x).unwrap().power() / x.power();
        assert!((ratio - 1.0).abs() < 0.02);
    }

    #[test]
    fn awgn_seed_determinism() {
        let x = noise(500, 5);
        let a = add_awgn(&x, 5.0, 1).unwrap();
        let b = add_awgn(&x, 5.0, 1).unwrap();
        let c = add_awgn(&x, 5.0, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn random_matrix_columns_are_separated() {
        let m = random_mixing_matrix(2, 3, 0.15, 4);
        assert_eq!(m.len(), 2);
        assert!(m.iter().all(|r| r.len() == 3));
        assert!(m.iter().flatten().all(|&v| (0.2..=1.0).contains(&v)));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sig.csv");
        let x = noise(32, 8);
        x.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# sample_rate=8000\n"));
        assert_eq!(TimeSignal::read_csv(&p).unwrap(), x);
    }

    proptest::proptest! {
        #[test]
        fn normalize_is_idempotent(v in proptest::collection::vec(-5.0f64..5.0, 2..200)) {
            let x = TimeSignal::new(v, 1000).unwrap();
            let once = normalize(&x);
            let twice = normalize(&once);
            for (a, b) in once.samples().iter().zip(twice.samples()) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn mix_is_linear(
            a in proptest::collection::vec(-1.0f64..1.0, 3),
            b in proptest::collection::vec(-1.0f64..1.0, 3),
            seed in 0u64..1000,
        ) {
            let sources: Vec<TimeSignal> = (0..3).map(|i| noise(64, seed + i)).collect();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = mix(&sources, &MixSpec::coefficients(sum), 0).unwrap();
            let ra = mix(&sources, &MixSpec::coefficients(a), 0).unwrap();
            let rb = mix(&sources, &MixSpec::coefficients(b), 0).unwrap();
            for ((l, x), y) in lhs[0].samples().iter().zip(ra[0].samples()).zip(rb[0].samples()) {
                proptest::prop_assert!((l - (x + y)).abs() < 1e-9);
            }
        }
    }
}
