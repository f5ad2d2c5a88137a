//! Reproducible experiment presets: scenario builders, seed sweeps and
//! per-preset pass/fail gates.
//!
//! Two benchmarks back the presets. The chirp benchmark mixes three fixed
//! LFM pulses at 50 kHz into two observations with a random instantaneous
//! matrix. The desk benchmark draws two or three sources from a synthetic
//! 8 kHz pool (sonar pings, ship-like harmonics, band noises) and mixes them
//! into two observations whose first row is all ones, so channel 0 matches
//! the training distribution of the networks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::embednet::{load_checkpoint, Architecture, NetConfig, NetworkParams, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::{fmt_ratio, inf_as_str, SeparationReport};
use crate::pipeline::{evaluate, write_atomic, ClusterCount, PipelineConfig, Separator};
use crate::signals::{gen_lfm, mix, random_mixing_matrix, GeneratorSpec, LfmSpec, MixSpec, TimeSignal};
use crate::tfr::{StftConfig, WindowKind};
use crate::training::{sample_mixture, train, DatasetSpec, PoolEntry, SourcePool};

pub const PRESETS: [&str; 6] = ["table4", "table5", "table6", "fig9", "fig10", "fig11"];

pub const LFM_RATE: u32 = 50_000;
/// Smallest angle between mixing-matrix columns, in radians.
pub const MIN_COLUMN_ANGLE: f64 = 0.15;
pub const TABLE4_SNRS: [f64; 6] = [0.0, 5.0, 10.0, 15.0, 20.0, f64::INFINITY];
pub const FIG9_SNRS: [f64; 5] = [0.0, 10.0, 20.0, 30.0, 40.0];
/// Largest tolerated drop between adjacent SNR steps of the table4 trend.
pub const TREND_SLACK: f64 = 0.03;
/// Held-out evaluation seeds are offset from training seeds by this much.
const HELD_OUT: u64 = 0x00e7_a100_0000;

/// Observations plus each source as it appears in observation 0.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub observations: Vec<TimeSignal>,
    pub references: Vec<TimeSignal>,
}

/// The three chirps: 6-8 kHz at 0.1 s for 0.3 s, 6.5-10 kHz at 0.5 s for
/// 0.2 s, 12-15 kHz at 0.6 s for 0.3 s, in a 1 s record.
pub fn lfm3_specs() -> [LfmSpec; 3] {
    let chirp = |f_start, f_end, launch_time, duration| LfmSpec {
        f_start,
        f_end,
        launch_time,
        duration,
        total_length: 1.0,
        sample_rate: LFM_RATE,
    };
    [
        chirp(6000.0, 8000.0, 0.1, 0.3),
        chirp(6500.0, 10000.0, 0.5, 0.2),
        chirp(12000.0, 15000.0, 0.6, 0.3),
    ]
}

/// Hamming, 512 points, 25% overlap.
pub fn lfm_stft() -> StftConfig {
    StftConfig::from_points(512, 384, WindowKind::Hamming, LFM_RATE)
}

/// Chirp benchmark at `snr_db` (`inf` for no noise).
pub fn lfm3_scenario(snr_db: f64, seed: u64) -> Result<Scenario> {
    let sources = lfm3_specs().iter().map(gen_lfm).collect::<Result<Vec<_>>>()?;
    let matrix = random_mixing_matrix(2, sources.len(), MIN_COLUMN_ANGLE, seed);
    let observations = mix(&sources, &MixSpec::matrix(matrix.clone()).with_noise(snr_db), seed)?;
    let references = sources.iter().zip(&matrix[0]).map(|(s, g)| s.scaled(*g)).collect();
    Ok(Scenario {
        observations,
        references,
    })
}

/// Sonar pings, ship-like harmonics, a low noise band and a high noise band.
pub fn desk_pool() -> Vec<PoolEntry> {
    vec![
        PoolEntry::Generator(GeneratorSpec::LfmPings {
            band: [1500.0, 3500.0],
            pulse_secs: [0.1, 0.3],
            pulses: [2, 4],
        }),
        PoolEntry::Generator(GeneratorSpec::Harmonic {
            f0: [60.0, 150.0],
            harmonics: 12,
            noise_level: 0.05,
        }),
        PoolEntry::Generator(GeneratorSpec::BandNoise {
            lo: 300.0,
            hi: 1000.0,
            am_hz: 2.0,
            am_depth: 0.6,
        }),
        PoolEntry::Generator(GeneratorSpec::BandNoise {
            lo: 2500.0,
            hi: 3800.0,
            am_hz: 4.0,
            am_depth: 0.5,
        }),
    ]
}

/// Size of the synthetic benchmark and its networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 8 kHz, one layer of 64 units, `K = 10`, the desk training schedule.
    #[default]
    Desk,
    /// 44.1 kHz, two layers of 600 units, `K = 100`, the full schedule.
    Paper,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        }
    }

    /// Training data: 2 s mixtures of two or three clean pool sources,
    /// Hann 32 ms / 8 ms.
    pub fn dataset(self, seed: u64) -> DatasetSpec {
        DatasetSpec {
            source_pool: desk_pool(),
            min_mix: 2,
            max_mix: 3,
            mixtures_per_epoch: 32,
            sample_rate: match self {
                Scale::Desk => 8000,
                Scale::Paper => 44100,
            },
            length_secs: 2.0,
            stft: StftConfig::default(),
            seed,
            ..DatasetSpec::default()
        }
    }

    pub fn train_config(self, seed: u64) -> TrainConfig {
        match self {
            Scale::Desk => TrainConfig {
                epochs: 30,
                seed,
                ..TrainConfig::desk()
            },
            Scale::Paper => TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        }
    }

    pub fn net_config(self, arch: Architecture, freq_bins: usize) -> NetConfig {
        match self {
            Scale::Desk => NetConfig::desk(arch, freq_bins),
            Scale::Paper => NetConfig::paper(arch, freq_bins),
        }
    }
}

/// Held-out desk mixture of `sources` pool draws at `snr_db`, mixed into two
/// observations. Row 0 of the mixing matrix is all ones; row 1 holds gains
/// in `[0.2, 1]` whose column directions differ by at least
/// `MIN_COLUMN_ANGLE`.
pub fn desk_scenario(scale: Scale, sources: usize, snr_db: f64, seed: u64) -> Result<Scenario> {
    let spec = DatasetSpec {
        min_mix: sources,
        max_mix: sources,
        ..scale.dataset(HELD_OUT + seed)
    };
    spec.validate()?;
    let pool = SourcePool::load(&spec)?;
    let drawn = sample_mixture(&spec, &pool, HELD_OUT + seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(HELD_OUT ^ seed);
    let second = loop {
        let g: Vec<f64> = (0..sources).map(|_| rng.random_range(0.2..=1.0)).collect();
        let angles: Vec<f64> = g.iter().map(|b| b.atan()).collect();
        let separated = (0..sources).all(|i| (i + 1..sources).all(|j| (angles[i] - angles[j]).abs() >= MIN_COLUMN_ANGLE));
        if separated {
            break g;
        }
    };
    let matrix = vec![vec![1.0; sources], second];
    let observations = mix(&drawn.contributions, &MixSpec::matrix(matrix).with_noise(snr_db), seed)?;
    Ok(Scenario {
        observations,
        references: drawn.contributions,
    })
}

/// Classic separation of a scenario into `k` clusters, scored against its
/// references.
pub fn run_classic(scenario: &Scenario, stft: StftConfig, k: usize, seed: u64) -> Result<SeparationReport> {
    let cfg = PipelineConfig {
        stft,
        k_clusters: ClusterCount::Fixed(k),
        seed,
        ..PipelineConfig::default()
    };
    let sep = Separator::new(cfg)?.separate(&scenario.observations, scenario.references.len())?;
    evaluate(&sep, &scenario.references)
}

/// Deep separation of observation 0 into `k` clusters.
pub fn run_deep(scenario: &Scenario, net: &NetworkParams, stft: StftConfig, k: usize, seed: u64) -> Result<SeparationReport> {
    let cfg = PipelineConfig {
        stft,
        k_clusters: ClusterCount::Fixed(k),
        seed,
        ..PipelineConfig::default()
    };
    let sep = Separator::with_network(cfg, net.clone())?.separate(&scenario.observations[..1], scenario.references.len())?;
    evaluate(&sep, &scenario.references)
}

/// Loads `<dir>/<scale>_<arch>/final.uanet`, training it on the benchmark
/// dataset first when absent.
pub fn desk_network(scale: Scale, arch: Architecture, dir: &Path, seed: u64) -> Result<NetworkParams> {
    let out = dir.join(format!("{}_{}", scale.name(), arch.name()));
    let path = out.join("final.uanet");
    if path.exists() {
        return Ok(load_checkpoint(&path)?.params);
    }
    let data = scale.dataset(seed);
    let net = scale.net_config(arch, data.freq_bins());
    log::info!("training {} network into {}", arch.name(), out.display());
    Ok(train(&data, &scale.train_config(seed), &net, &out)?.params)
}

/// Same architecture and input normalization as `net`, with untrained
/// weights.
pub fn random_baseline(net: &NetworkParams, seed: u64) -> Result<NetworkParams> {
    let mut random = NetworkParams::init(&net.config, seed)?;
    random.input_norm = net.input_norm.clone();
    Ok(random)
}

/// One scored source of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub condition: String,
    pub seed: u64,
    pub source: usize,
    pub xi: f64,
    pub psr: f64,
    #[serde(with = "inf_as_str")]
    pub sir_m: f64,
}

/// Mean and population standard deviation over seeds of the per-run means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub runs: usize,
    pub xi_mean: f64,
    pub xi_std: f64,
    pub psr_mean: f64,
    pub psr_std: f64,
    #[serde(with = "inf_as_str")]
    pub sir_m_mean: f64,
    #[serde(with = "inf_as_str")]
    pub sir_m_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub preset: String,
    pub seeds: Vec<u64>,
    pub conditions: Vec<ConditionSummary>,
    pub gate: Gate,
    #[serde(skip)]
    pub rows: Vec<RunRow>,
}

impl ExperimentReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.condition == name)
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from("condition,seed,source,xi,psr,sir_m\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.condition, r.seed, r.source, r.xi, r.psr, fmt_ratio(r.sir_m));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("condition,runs,xi_mean,xi_std,psr_mean,psr_std,sir_m_mean,sir_m_std\n");
        for c in &self.conditions {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.condition,
                c.runs,
                c.xi_mean,
                c.xi_std,
                c.psr_mean,
                c.psr_std,
                fmt_ratio(c.sir_m_mean),
                fmt_ratio(c.sir_m_std)
            );
        }
        out
    }

    /// Writes `<preset>_runs.csv`, `<preset>_summary.csv` and
    /// `<preset>_summary.json` atomically.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            (format!("{}_runs.csv", self.preset), self.runs_csv()),
            (format!("{}_summary.csv", self.preset), self.summary_csv()),
            (format!("{}_summary.json", self.preset), serde_json::to_string_pretty(self)? + "\n"),
        ];
        let mut written = Vec::new();
        for (name, text) in files {
            let path = dir.join(name);
            write_atomic(&path, |p| std::fs::write(p, &text).map_err(|e| Error::io(p, e)))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if !mean.is_finite() {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Collects per-seed reports of one condition.
#[derive(Debug, Default)]
struct Sweep {
    rows: Vec<RunRow>,
    conditions: Vec<ConditionSummary>,
}

impl Sweep {
    fn add(&mut self, condition: &str, runs: &[(u64, SeparationReport)]) {
        for (seed, report) in runs {
            for s in &report.sources {
                self.rows.push(RunRow {
                    condition: condition.to_string(),
                    seed: *seed,
                    source: s.source,
                    xi: s.xi,
                    psr: s.psr,
                    sir_m: s.sir_m,
                });
            }
        }
        let pick = |f: fn(&SeparationReport) -> f64| mean_std(&runs.iter().map(|(_, r)| f(r)).collect::<Vec<_>>());
        let (xi_mean, xi_std) = pick(|r| r.mean_xi);
        let (psr_mean, psr_std) = pick(|r| r.mean_psr);
        let (sir_m_mean, sir_m_std) = pick(|r| r.mean_sir_m);
        self.conditions.push(ConditionSummary {
            condition: condition.to_string(),
            runs: runs.len(),
            xi_mean,
            xi_std,
            psr_mean,
            psr_std,
            sir_m_mean,
            sir_m_std,
        });
    }

    fn finish(self, preset: &str, seeds: &[u64], gate: Gate) -> ExperimentReport {
        ExperimentReport {
            preset: preset.to_string(),
            seeds: seeds.to_vec(),
            conditions: self.conditions,
            gate,
            rows: self.rows,
        }
    }
}

fn sweep(seeds: &[u64], run: impl Fn(u64) -> Result<SeparationReport> + Sync) -> Result<Vec<(u64, SeparationReport)>> {
    use rayon::prelude::*;
    seeds.par_iter().map(|&s| run(s).map(|r| (s, r))).collect()
}

/// Settings shared by all presets.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    /// Where desk networks are cached or trained.
    pub net_dir: PathBuf,
    /// Seed of the benchmark network training runs.
    pub train_seed: u64,
    pub scale: Scale,
}

impl ExperimentConfig {
    /// Ten consecutive seeds from `base`.
    pub fn new(base: u64, net_dir: impl Into<PathBuf>) -> Self {
        Self {
            seeds: (base..base + 10).collect(),
            net_dir: net_dir.into(),
            train_seed: 0,
            scale: Scale::Desk,
        }
    }
}

pub fn snr_label(snr: f64) -> String {
    if snr.is_finite() {
        format!("snr_{snr}")
    } else {
        "no_noise".into()
    }
}

/// Chirp benchmark, classic method with `k = 3`, over the table SNRs.
/// Gate: no-noise mean xi and PSR at least 0.9; xi and PSR never drop by
/// more than `TREND_SLACK` from one SNR to the next; no-noise SIR_M at
/// least 100 times the 0 dB value.
pub fn table4(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut sw = Sweep::default();
    for &snr in &TABLE4_SNRS {
        let runs = sweep(&cfg.seeds, |s| run_classic(&lfm3_scenario(snr, s)?, lfm_stft(), 3, s))?;
        sw.add(&snr_label(snr), &runs);
    }
    let c = &sw.conditions;
    let clean = c.last().unwrap();
    let mut failures = Vec::new();
    if clean.xi_mean < 0.9 || clean.psr_mean < 0.9 {
        failures.push(format!("no-noise xi {:.3} / PSR {:.3} below 0.9", clean.xi_mean, clean.psr_mean));
    }
    for w in c.windows(2) {
        for (name, a, b) in [("xi", w[0].xi_mean, w[1].xi_mean), ("PSR", w[0].psr_mean, w[1].psr_mean)] {
            if b < a - TREND_SLACK {
                failures.push(format!("{name} drops {:.3} from {} to {}", a - b, w[0].condition, w[1].condition));
            }
        }
    }
    let ratio = clean.sir_m_mean / c[0].sir_m_mean;
    if !(ratio >= 100.0) {
        failures.push(format!("SIR_M ratio no-noise / 0 dB is {}", fmt_ratio(ratio)));
    }
    let gate = Gate {
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "no-noise xi {:.3}, PSR {:.3}; SIR_M ratio {}",
                clean.xi_mean,
                clean.psr_mean,
                fmt_ratio(ratio)
            )
        } else {
            failures.join("; ")
        },
    };
    Ok(sw.finish("table4", &cfg.seeds, gate))
}

/// Desk benchmark, two held-out sources at 40 dB, trained bidirectional
/// LSTM against the same network with random weights. Gate: trained mean
/// xi at least 0.8 and at least 0.15 above the random baseline.
pub fn table5(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let net = desk_network(cfg.scale, Architecture::Bilstm, &cfg.net_dir, cfg.train_seed)?;
    let stft = StftConfig::default();
    let mut sw = Sweep::default();
    let trained = sweep(&cfg.seeds, |s| run_deep(&desk_scenario(cfg.scale, 2, 40.0, s)?, &net, stft, 2, s))?;
    sw.add("bilstm", &trained);
    let random = sweep(&cfg.seeds, |s| {
        run_deep(&desk_scenario(cfg.scale, 2, 40.0, s)?, &random_baseline(&net, cfg.train_seed + 1)?, stft, 2, s)
    })?;
    sw.add("random_init", &random);
    let (t, r) = (sw.conditions[0].xi_mean, sw.conditions[1].xi_mean);
    let gate = Gate {
        passed: t >= 0.8 && t - r >= 0.15,
        detail: format!("trained xi {t:.3}, random-init xi {r:.3}, margin {:.3}", t - r),
    };
    Ok(sw.finish("table5", &cfg.seeds, gate))
}

/// Desk benchmark, three held-out sources at 40 dB: deep (bidirectional
/// LSTM on observation 0) against classic (both observations). Report only.
pub fn table6(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let net = desk_network(cfg.scale, Architecture::Bilstm, &cfg.net_dir, cfg.train_seed)?;
    let stft = StftConfig::default();
    let mut sw = Sweep::default();
    sw.add("deep", &sweep(&cfg.seeds, |s| run_deep(&desk_scenario(cfg.scale, 3, 40.0, s)?, &net, stft, 3, s))?);
    sw.add("classic", &sweep(&cfg.seeds, |s| run_classic(&desk_scenario(cfg.scale, 3, 40.0, s)?, stft, 3, s))?);
    let gate = Gate {
        passed: true,
        detail: format!(
            "report only: deep xi {:.3}, classic xi {:.3}",
            sw.conditions[0].xi_mean, sw.conditions[1].xi_mean
        ),
    };
    Ok(sw.finish("table6", &cfg.seeds, gate))
}

/// Desk benchmark, three held-out sources, deep against classic over
/// 0..40 dB SNR. Report only.
pub fn fig9(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let net = desk_network(cfg.scale, Architecture::Bilstm, &cfg.net_dir, cfg.train_seed)?;
    let stft = StftConfig::default();
    let mut sw = Sweep::default();
    for &snr in &FIG9_SNRS {
        let label = snr_label(snr);
        sw.add(
            &format!("deep_{label}"),
            &sweep(&cfg.seeds, |s| run_deep(&desk_scenario(cfg.scale, 3, snr, s)?, &net, stft, 3, s))?,
        );
        sw.add(
            &format!("classic_{label}"),
            &sweep(&cfg.seeds, |s| run_classic(&desk_scenario(cfg.scale, 3, snr, s)?, stft, 3, s))?,
        );
    }
    let gate = Gate {
        passed: true,
        detail: "report only".into(),
    };
    Ok(sw.finish("fig9", &cfg.seeds, gate))
}

/// Desk benchmark, three held-out sources at 0 dB, deep separation with
/// `k = 3` and `k = 4` (the surplus cluster is dropped before scoring).
/// Gate: mean xi with `k = 4` strictly above `k = 3`.
pub fn fig10(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let net = desk_network(cfg.scale, Architecture::Bilstm, &cfg.net_dir, cfg.train_seed)?;
    let stft = StftConfig::default();
    let mut sw = Sweep::default();
    for k in [3, 4] {
        sw.add(
            &format!("k{k}"),
            &sweep(&cfg.seeds, |s| run_deep(&desk_scenario(cfg.scale, 3, 0.0, s)?, &net, stft, k, s))?,
        );
    }
    let (a, b) = (sw.conditions[0].xi_mean, sw.conditions[1].xi_mean);
    let gate = Gate {
        passed: b > a,
        detail: format!("xi k=3 {a:.4}, k=4 {b:.4}, margin {:.4}", b - a),
    };
    Ok(sw.finish("fig10", &cfg.seeds, gate))
}

/// Desk benchmark, two held-out sources at 40 dB, one trained network per
/// architecture. Gate: bidirectional LSTM mean SIR_M strictly above the
/// Elman RNN; the full ordering is reported.
pub fn fig11(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let stft = StftConfig::default();
    let mut sw = Sweep::default();
    for arch in [Architecture::Rnn, Architecture::Lstm, Architecture::Bilstm] {
        let net = desk_network(cfg.scale, arch, &cfg.net_dir, cfg.train_seed)?;
        sw.add(
            arch.name(),
            &sweep(&cfg.seeds, |s| run_deep(&desk_scenario(cfg.scale, 2, 40.0, s)?, &net, stft, 2, s))?,
        );
    }
    let sir: Vec<f64> = sw.conditions.iter().map(|c| c.sir_m_mean).collect();
    let gate = Gate {
        passed: sir[2] > sir[0],
        detail: format!(
            "SIR_M rnn {}, lstm {}, bilstm {}; full ordering {}",
            fmt_ratio(sir[0]),
            fmt_ratio(sir[1]),
            fmt_ratio(sir[2]),
            if sir[2] >= sir[1] && sir[1] >= sir[0] { "holds" } else { "does not hold" }
        ),
    };
    Ok(sw.finish("fig11", &cfg.seeds, gate))
}

/// Runs a preset by name.
pub fn run_preset(name: &str, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match name {
        "table4" => table4(cfg),
        "table5" => table5(cfg),
        "table6" => table6(cfg),
        "fig9" => fig9(cfg),
        "fig10" => fig10(cfg),
        "fig11" => fig11(cfg),
        other => Err(Error::param("preset", format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", ")))),
    }
}
