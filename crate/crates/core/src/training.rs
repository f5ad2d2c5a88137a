//! Training data and the epoch loop for the embedding networks.
//!
//! Every mixture draws 2..=C sources from a pool, scales each peak-normalized
//! source by a gain in `[3/4, 1]`, sums them and labels every bin by its
//! dominant source. Spectrograms are cut into fixed-length, half-overlapping
//! chunks that form the training sequences.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embednet::{save_checkpoint, sgd_step, CheckpointMeta, DropoutMasks, InputNorm, NetConfig, NetworkParams, TrainConfig};
use crate::error::{Error, Result};
use crate::masking::{ideal_labels, LabelMatrix};
use crate::signals::{add_awgn, normalize, read_wav, GeneratorSpec, TimeSignal};
use crate::tfr::{log_magnitude, stft, Spectrogram, StftConfig};

/// Absolute floor of the network's log-magnitude input, in dB.
pub const INPUT_FLOOR_DB: f64 = -80.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoolEntry {
    /// A recorded source, used whole (trimmed to the mixture length).
    Wav { wav: PathBuf },
    /// A synthetic family; each draw is a fresh realization.
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub source_pool: Vec<PoolEntry>,
    pub min_mix: usize,
    pub max_mix: usize,
    pub mixtures_per_epoch: usize,
    /// Rate of synthetic sources; recorded ones must match it.
    pub sample_rate: u32,
    /// Mixture length in seconds.
    pub length_secs: f64,
    pub stft: StftConfig,
    pub floor_db: f64,
    /// Additive white noise on each mixture; `None` for clean mixtures.
    pub noise_snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            source_pool: Vec::new(),
            min_mix: 2,
            max_mix: 3,
            mixtures_per_epoch: 32,
            sample_rate: 8000,
            length_secs: 2.0,
            stft: StftConfig::default(),
            floor_db: crate::features::DEFAULT_FLOOR_DB,
            noise_snr_db: None,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_mix < 2 || self.min_mix > self.max_mix {
            return Err(Error::param(
                "min_mix",
                format!("need 2 <= min_mix <= max_mix, got {}..{}", self.min_mix, self.max_mix),
            ));
        }
        if self.source_pool.len() < self.max_mix {
            return Err(Error::param(
                "source_pool",
                format!("{} entries cannot supply {} distinct sources", self.source_pool.len(), self.max_mix),
            ));
        }
        if self.mixtures_per_epoch == 0 {
            return Err(Error::param("mixtures_per_epoch", "must be positive"));
        }
        if !(self.length_secs > 0.0) {
            return Err(Error::param("length_secs", "must be positive"));
        }
        self.stft.validate(self.sample_rate)
    }

    pub fn freq_bins(&self) -> usize {
        self.stft.freq_bins(self.sample_rate)
    }
}

/// One training sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainChunk {
    /// `chunk_frames x F` log-magnitudes.
    pub frames: Array2<f64>,
    pub labels: LabelMatrix,
    /// Index of the mixture within its epoch.
    pub mixture: usize,
}

/// A sampled mixture with the contribution of each source in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: TimeSignal,
    /// Scaled sources; they sum to the noiseless mixture.
    pub contributions: Vec<TimeSignal>,
    /// Pool indices, in label-column order.
    pub pool_indices: Vec<usize>,
}

/// Recorded pool entries loaded once.
#[derive(Debug, Default)]
pub struct SourcePool {
    recorded: HashMap<usize, TimeSignal>,
}

impl SourcePool {
    pub fn load(spec: &DatasetSpec) -> Result<Self> {
        let mut recorded = HashMap::new();
        for (i, entry) in spec.source_pool.iter().enumerate() {
            if let PoolEntry::Wav { wav } = entry {
                let x = read_wav(wav)?;
                if x.sample_rate() != spec.sample_rate {
                    return Err(Error::param(
                        "source_pool",
                        format!("{} is sampled at {} Hz, dataset expects {}", wav.display(), x.sample_rate(), spec.sample_rate),
                    ));
                }
                recorded.insert(i, x);
            }
        }
        Ok(Self { recorded })
    }

    fn draw(&self, spec: &DatasetSpec, index: usize, seed: u64) -> Result<TimeSignal> {
        let len = (spec.length_secs * spec.sample_rate as f64).round() as usize;
        match &spec.source_pool[index] {
            PoolEntry::Generator(g) => g.generate(spec.sample_rate, spec.length_secs, seed),
            PoolEntry::Wav { .. } => {
                let x = &self.recorded[&index];
                if x.len() <= len {
                    return Ok(x.clone());
                }
                let offset = ChaCha8Rng::seed_from_u64(seed).random_range(0..=x.len() - len);
                TimeSignal::new(x.samples()[offset..offset + len].to_vec(), x.sample_rate())
            }
        }
    }
}

/// Draws one mixture. The result is peak-normalized, with contributions
/// scaled by the same factor.
pub fn sample_mixture(spec: &DatasetSpec, pool: &SourcePool, seed: u64) -> Result<Mixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(spec.min_mix..=spec.max_mix);
    let mut pool_indices = sample_indices(&mut rng, spec.source_pool.len(), count).into_vec();
    pool_indices.sort_unstable();
    let mut sources = Vec::with_capacity(count);
    for &i in &pool_indices {
        sources.push(normalize(&pool.draw(spec, i, rng.next_u64())?));
    }
    let len = sources.iter().map(|s| s.len()).min().unwrap_or(0);
    let gains: Vec<f64> = (0..count).map(|_| rng.random_range(0.75..=1.0)).collect();
    let mut contributions: Vec<TimeSignal> = sources.iter().zip(&gains).map(|(s, g)| s.resized(len).scaled(*g)).collect();
    let mut mixture = contributions[1..].iter().try_fold(contributions[0].clone(), |acc, c| acc.add(c))?;
    if let Some(snr) = spec.noise_snr_db {
        mixture = add_awgn(&mixture, snr, rng.next_u64())?;
    }
    let peak = mixture.peak();
    if peak > 0.0 {
        mixture = mixture.scaled(1.0 / peak);
        contributions = contributions.iter().map(|c| c.scaled(1.0 / peak)).collect();
    }
    Ok(Mixture {
        mixture,
        contributions,
        pool_indices,
    })
}

/// Mixture spectrogram and the `T x F` network input derived from it.
pub fn network_input(mixture: &TimeSignal, cfg: &StftConfig) -> Result<(Spectrogram, Array2<f64>)> {
    let spec = stft(mixture, cfg)?;
    let frames = log_magnitude(&spec, INPUT_FLOOR_DB);
    Ok((spec, frames))
}

/// Chunk start frames: windows of `chunk` frames advancing by
/// `chunk * (1 - overlap)`. A sequence shorter than one chunk yields a
/// single shorter chunk.
pub fn chunk_starts(total: usize, chunk: usize, overlap: f64) -> Vec<usize> {
    if total <= chunk {
        return vec![0];
    }
    let hop = ((chunk as f64 * (1.0 - overlap)).round() as usize).max(1);
    (0..).map(|i| i * hop).take_while(|&s| s + chunk <= total).collect()
}

fn chunk_mixture(frames: &Array2<f64>, labels: &LabelMatrix, chunk: usize, overlap: f64, mixture: usize) -> Vec<TrainChunk> {
    let (t, f) = frames.dim();
    chunk_starts(t, chunk, overlap)
        .into_iter()
        .map(|start| {
            let end = (start + chunk).min(t);
            let rows = s![start * f..end * f, ..];
            TrainChunk {
                frames: frames.slice(s![start..end, ..]).to_owned(),
                labels: LabelMatrix {
                    onehot: labels.onehot.slice(rows).to_owned(),
                    weights: labels.weights[start * f..end * f].to_vec(),
                },
                mixture,
            }
        })
        .collect()
}

fn epoch_seeds(spec: &DatasetSpec, epoch: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(epoch);
    (0..spec.mixtures_per_epoch).map(|_| rng.next_u64()).collect()
}

/// All chunks of one epoch, in mixture order. Determined by
/// `(spec.seed, epoch)`.
pub fn build_epoch(spec: &DatasetSpec, pool: &SourcePool, epoch: u64, chunk_frames: usize, overlap: f64) -> Result<Vec<TrainChunk>> {
    spec.validate()?;
    let per_mixture: Vec<Vec<TrainChunk>> = epoch_seeds(spec, epoch)
        .into_par_iter()
        .enumerate()
        .map(|(m, seed)| {
            let mix = sample_mixture(spec, pool, seed)?;
            let (_, frames) = network_input(&mix.mixture, &spec.stft)?;
            let specs = mix
                .contributions
                .iter()
                .map(|c| stft(c, &spec.stft))
                .collect::<Result<Vec<_>>>()?;
            let labels = ideal_labels(&specs, spec.floor_db)?;
            Ok(chunk_mixture(&frames, &labels, chunk_frames, overlap, m))
        })
        .collect::<Result<_>>()?;
    Ok(per_mixture.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub chunk: usize,
    /// Chunk loss divided by the squared number of weighted rows.
    pub loss: f64,
}

pub fn write_loss_csv(path: impl AsRef<Path>, history: &[LossRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,chunk,loss\n");
    for r in history {
        out.push_str(&format!("{},{},{:e}\n", r.epoch, r.chunk, r.loss));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parameters plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: NetworkParams,
    velocity: NetworkParams,
    cfg: TrainConfig,
}

impl Trainer {
    pub fn new(params: NetworkParams, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            velocity: params.zeros_like(),
            params,
            cfg,
        })
    }

    /// One optimizer step on the mean gradient of `batch`. Returns each
    /// chunk's normalized loss. `step_seed` drives the dropout masks.
    pub fn step(&mut self, batch: &[TrainChunk], step_seed: u64) -> Result<Vec<f64>> {
        let cfg = &self.cfg;
        let params = &self.params;
        let results: Vec<Result<(f64, f64, NetworkParams)>> = batch
            .par_iter()
            .enumerate()
            .map(|(i, chunk)| {
                let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
                rng.set_stream(i as u64);
                let masks = DropoutMasks::sample(&params.config, chunk.frames.nrows(), cfg.dropout_input, cfg.dropout_hidden, &mut rng);
                let active: f64 = chunk.labels.weights.iter().sum();
                let norm = if active > 0.0 { 1.0 / (active * active) } else { 1.0 };
                let scale = if cfg.normalize_loss { norm } else { 1.0 };
                let (loss, grads) = params.loss_and_gradients_with(chunk.frames.view(), &chunk.labels, &masks, scale)?;
                Ok((loss / scale * norm, loss, grads))
            })
            .collect();
        let mut total = self.params.zeros_like();
        let mut losses = Vec::with_capacity(batch.len());
        for r in results {
            let (reported, _, g) = r?;
            losses.push(reported);
            total.accumulate(&g);
        }
        if batch.len() > 1 {
            let inv = 1.0 / batch.len() as f64;
            for t in total.trainable_mut() {
                t.iter_mut().for_each(|v| *v *= inv);
            }
        }
        if losses.iter().all(|l| l.is_finite()) && total.trainable().iter().all(|t| t.iter().all(|v| v.is_finite())) {
            sgd_step(&mut self.params, &total, &self.cfg, &mut self.velocity);
        } else {
            losses.push(f64::NAN);
        }
        Ok(losses)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history: Vec<LossRecord>,
    pub params: NetworkParams,
}

/// Runs `cfg.epochs` epochs, writing `epoch_NNN.uanet` after each, plus
/// `final.uanet` and `loss.csv`, into `out_dir`.
pub fn train(spec: &DatasetSpec, cfg: &TrainConfig, net: &NetConfig, out_dir: impl AsRef<Path>) -> Result<TrainOutcome> {
    let out_dir = out_dir.as_ref();
    spec.validate()?;
    cfg.validate()?;
    if net.freq_bins != spec.freq_bins() {
        return Err(Error::param(
            "freq_bins",
            format!("network expects {} bins, dataset produces {}", net.freq_bins, spec.freq_bins()),
        ));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let pool = SourcePool::load(spec)?;
    let mut params = NetworkParams::init(net, cfg.seed)?;
    let first = build_epoch(spec, &pool, 0, cfg.chunk_frames, cfg.chunk_overlap)?;
    params.input_norm = InputNorm::fit(first.iter().map(|c| c.frames.view()), net.freq_bins);

    let mut meta = CheckpointMeta {
        epoch: 0,
        seed: cfg.seed,
        stft: Some(spec.stft),
        sample_rate: Some(spec.sample_rate),
        floor_db: Some(spec.floor_db),
        train: Some(cfg.clone()),
    };
    let mut trainer = Trainer::new(params, cfg.clone())?;
    let mut history = Vec::new();
    let mut epoch_chunks = Some(first);
    for epoch in 0..cfg.epochs {
        let mut chunks = match epoch_chunks.take() {
            Some(c) => c,
            None => build_epoch(spec, &pool, epoch as u64, cfg.chunk_frames, cfg.chunk_overlap)?,
        };
        let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0000_0000);
        order_rng.set_stream(epoch as u64);
        for i in (1..chunks.len()).rev() {
            chunks.swap(i, order_rng.random_range(0..=i));
        }
        let mut chunk_index = 0;
        for (b, batch) in chunks.chunks(cfg.batch_chunks).enumerate() {
            let losses = trainer.step(batch, order_rng.next_u64())?;
            for (j, &loss) in losses.iter().enumerate().take(batch.len()) {
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        chunk: chunk_index + j,
                        loss,
                    });
                }
            }
            if losses.len() > batch.len() {
                return Err(Error::Diverged {
                    epoch,
                    chunk: chunk_index,
                    loss: f64::NAN,
                });
            }
            for (j, &loss) in losses.iter().enumerate() {
                history.push(LossRecord {
                    epoch,
                    chunk: chunk_index + j,
                    loss,
                });
            }
            chunk_index += batch.len();
            log::debug!("epoch {epoch} batch {b} mean loss {:.4e}", losses.iter().sum::<f64>() / losses.len() as f64);
        }
        meta.epoch = epoch + 1;
        save_checkpoint(out_dir.join(format!("epoch_{:03}.uanet", epoch + 1)), &trainer.params, &meta)?;
        let recent: Vec<f64> = history.iter().filter(|r| r.epoch == epoch).map(|r| r.loss).collect();
        log::info!("epoch {} mean loss {:.4e}", epoch + 1, recent.iter().sum::<f64>() / recent.len().max(1) as f64);
    }
    let checkpoint = out_dir.join("final.uanet");
    save_checkpoint(&checkpoint, &trainer.params, &meta)?;
    write_loss_csv(out_dir.join("loss.csv"), &history)?;
    Ok(TrainOutcome {
        checkpoint,
        history,
        params: trainer.params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embednet::{load_checkpoint, Architecture};

    fn small_spec(pool: usize, max_mix: usize) -> DatasetSpec {
        let bands = [[300.0, 700.0], [1200.0, 1700.0], [2300.0, 2900.0], [3300.0, 3800.0]];
        DatasetSpec {
            source_pool: bands[..pool]
                .iter()
                .map(|b| {
                    PoolEntry::Generator(GeneratorSpec::BandNoise {
                        lo: b[0],
                        hi: b[1],
                        am_hz: 3.0,
                        am_depth: 0.5,
                    })
                })
                .collect(),
            min_mix: 2,
            max_mix,
            mixtures_per_epoch: 3,
            length_secs: 0.5,
            seed: 7,
            ..DatasetSpec::default()
        }
    }

    #[test]
    fn chunk_count_matches_enumeration() {
        for total in [100usize, 101, 149, 150, 151, 250, 999] {
            for chunk in [100usize, 40, 7] {
                if total < chunk {
                    continue;
                }
                let starts = chunk_starts(total, chunk, 0.5);
                let half = (chunk as f64 / 2.0).round() as usize;
                let mut enumerated = 0;
                let mut s = 0;
                while s + chunk <= total {
                    enumerated += 1;
                    s += half;
                }
                assert_eq!(starts.len(), enumerated);
                assert_eq!(starts.iter().map(|&s| s / half).collect::<Vec<_>>(), (0..enumerated).collect::<Vec<_>>());
                if chunk % 2 == 0 {
                    assert_eq!(starts.len(), (total - chunk) / half + 1);
                }
            }
        }
        assert_eq!(chunk_starts(100, 100, 0.5), vec![0]);
        assert_eq!(chunk_starts(30, 100, 0.5), vec![0]);
    }

    #[test]
    fn two_source_pool_gives_two_columns() {
        let spec = small_spec(2, 2);
        let pool = SourcePool::load(&spec).unwrap();
        let chunks = build_epoch(&spec, &pool, 0, 20, 0.5).unwrap();
        assert!(!chunks.is_empty());
        for c in &chunks {
            assert_eq!(c.labels.sources(), 2);
            assert_eq!(c.labels.onehot.nrows(), c.frames.nrows() * spec.freq_bins());
            assert!(c.frames.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn epochs_are_deterministic_and_distinct() {
        let spec = small_spec(4, 3);
        let pool = SourcePool::load(&spec).unwrap();
        let a = build_epoch(&spec, &pool, 1, 20, 0.5).unwrap();
        let b = build_epoch(&spec, &pool, 1, 20, 0.5).unwrap();
        assert_eq!(a, b);
        let c = build_epoch(&spec, &pool, 2, 20, 0.5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn contributions_sum_to_mixture() {
        let spec = small_spec(4, 3);
        let pool = SourcePool::load(&spec).unwrap();
        for seed in 0..5 {
            let m = sample_mixture(&spec, &pool, seed).unwrap();
            assert!((2..=3).contains(&m.contributions.len()));
            let sum = m.contributions[1..].iter().fold(m.contributions[0].clone(), |a, c| a.add(c).unwrap());
            for (x, y) in sum.samples().iter().zip(m.mixture.samples()) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!((m.mixture.peak() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = small_spec(2, 2);
        spec.max_mix = 3;
        assert!(matches!(spec.validate(), Err(Error::Parameter { name: "source_pool", .. })));
        let mut spec = small_spec(2, 2);
        spec.min_mix = 1;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn dataset_spec_json_round_trip() {
        let spec = small_spec(3, 3);
        let json = serde_json::to_string(&spec).unwrap();
        let back: DatasetSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let wav: PoolEntry = serde_json::from_str(r#"{"wav": "a.wav"}"#).unwrap();
        assert_eq!(wav, PoolEntry::Wav { wav: "a.wav".into() });
    }

    #[test]
    fn overfits_a_single_chunk() {
        let spec = small_spec(2, 2);
        let pool = SourcePool::load(&spec).unwrap();
        let chunk = build_epoch(&spec, &pool, 0, 20, 0.5).unwrap().remove(0);
        let net = NetConfig::new(Architecture::Bilstm, spec.freq_bins(), 16, 4);
        let mut params = NetworkParams::init(&net, 3).unwrap();
        params.input_norm = InputNorm::fit([chunk.frames.view()], net.freq_bins);
        let cfg = TrainConfig {
            dropout_input: 0.0,
            dropout_hidden: 0.0,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(params, cfg).unwrap();
        let batch = std::slice::from_ref(&chunk);
        let first = trainer.step(batch, 0).unwrap()[0];
        let mut last = first;
        for i in 1..50 {
            last = trainer.step(batch, i).unwrap()[0];
        }
        assert!(last < 0.1 * first, "{first} -> {last}");
    }

    #[test]
    fn training_writes_checkpoints_and_is_reproducible() {
        let spec = small_spec(3, 2);
        let net = NetConfig::new(Architecture::Lstm, spec.freq_bins(), 8, 3);
        let cfg = TrainConfig {
            epochs: 2,
            chunk_frames: 20,
            learning_rate: 1e-2,
            normalize_loss: true,
            batch_chunks: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let a = train(&spec, &cfg, &net, dir.path().join("a")).unwrap();
        let b = train(&spec, &cfg, &net, dir.path().join("b")).unwrap();
        assert_eq!(a.history, b.history);
        assert!(a.history.iter().all(|r| r.loss.is_finite()));
        assert!(dir.path().join("a/epoch_001.uanet").exists());
        assert!(dir.path().join("a/epoch_002.uanet").exists());
        let csv = std::fs::read_to_string(dir.path().join("a/loss.csv")).unwrap();
        assert!(csv.starts_with("epoch,chunk,loss\n"));
        let loaded = load_checkpoint(&a.checkpoint).unwrap();
        assert_eq!(loaded.params, a.params);
        assert_eq!(loaded.meta.epoch, 2);
    }

    #[test]
    fn zero_epochs_keep_initial_weights() {
        let spec = small_spec(2, 2);
        let net = NetConfig::new(Architecture::Rnn, spec.freq_bins(), 6, 3);
        let cfg = TrainConfig {
            epochs: 0,
            seed: 4,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let out = train(&spec, &cfg, &net, dir.path()).unwrap();
        let init = NetworkParams::init(&net, 4).unwrap();
        assert_eq!(out.params.trainable(), init.trainable());
        assert!(out.history.is_empty());
    }

    #[test]
    fn diverging_run_names_epoch_and_chunk() {
        let spec = small_spec(2, 2);
        let net = NetConfig::new(Architecture::Lstm, spec.freq_bins(), 8, 3);
        let cfg = TrainConfig {
            epochs: 3,
            chunk_frames: 20,
            learning_rate: 1e300,
            momentum: 0.0,
            seed: 1,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        match train(&spec, &cfg, &net, dir.path()) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch < 3),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.history.len())),
        }
    }
}
