//! `uasep` command line: generate benchmark signals, separate mixtures,
//! train embedding networks, score estimates and run experiment presets.
//!
//! Exit codes: 0 success, 2 usage, 3 data or file format, 4 experiment gate
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use uasep::embednet::{load_checkpoint, Architecture, NetConfig};
use uasep::experiments::{self, desk_scenario, lfm3_scenario, lfm3_specs, ExperimentConfig, Scale, Scenario, PRESETS};
use uasep::masking::ideal_binary_mask;
use uasep::metrics::align_and_report;
use uasep::pipeline::{evaluate, write_atomic, ClusterCount, Method, PipelineConfig, Separator};
use uasep::signals::{read_wav, read_wav_channels, write_wav, write_wav_channels, BitDepth, TimeSignal};
use uasep::tfr::{stft, Spectrogram, StftConfig};
use uasep::training::{train, DatasetSpec};
use uasep::Error;

#[derive(Parser)]
#[command(name = "uasep", version, about = "Time-frequency masking source separation")]
struct Cli {
    /// Global seed; falls back to UASEP_SEED, then 0.
    #[arg(long, global = true, env = "UASEP_SEED")]
    seed: Option<u64>,
    /// JSON file with the subcommand's settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark mixture, its sources and references.
    Gen(GenArgs),
    /// Separate a mixture into cluster estimates.
    Separate(SeparateArgs),
    /// Train an embedding network.
    Train(TrainArgs),
    /// Score estimate files against reference files.
    Eval(EvalArgs),
    /// Run an experiment preset and check its gate.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenArgs {
    /// `lfm3` (three chirps, 50 kHz) or `desk` (synthetic pool, 8 kHz).
    #[arg(long)]
    preset: Option<String>,
    /// Noise level in dB; omit for no noise.
    #[arg(long)]
    snr: Option<f64>,
    /// Source count for the desk preset.
    #[arg(long)]
    sources: Option<usize>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct GenConfig {
    preset: String,
    snr_db: Option<f64>,
    sources: usize,
    seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            preset: "lfm3".into(),
            snr_db: None,
            sources: 2,
            seed: 0,
        }
    }
}

#[derive(Args)]
struct SeparateArgs {
    /// Mixture WAV; every channel is one observation.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    method: Option<Method>,
    /// Cluster count or `auto`.
    #[arg(long)]
    k: Option<ClusterCount>,
    /// Source count that `auto` resolves to.
    #[arg(long, default_value_t = 2)]
    sources: usize,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Reference WAVs, one per source, for a report.
    #[arg(long, value_delimiter = ',')]
    references: Vec<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset JSON; defaults to the synthetic benchmark pool.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "bilstm")]
    arch: Architecture,
    #[arg(long)]
    epochs: Option<usize>,
    /// Write the initialized network without training.
    #[arg(long)]
    init_only: bool,
    /// Two layers of 600 units, `K = 100`, 44.1 kHz default data.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    estimates: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    references: Vec<PathBuf>,
    /// Analysed mixture; defaults to the sum of the references.
    #[arg(long)]
    mixture: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
struct EvalConfig {
    stft: StftConfig,
    /// Bins this many dB below the loudest bin of the summed estimates are
    /// left out of every derived mask; defaults to -120.
    floor_db: Option<f64>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    preset: String,
    #[arg(long, short)]
    out: PathBuf,
    /// Cache of trained networks; defaults to `<out>/nets`.
    #[arg(long)]
    net_dir: Option<PathBuf>,
    /// Number of evaluation seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct ExperimentSettings {
    preset: String,
    seed: u64,
    seeds: usize,
    train_seed: u64,
    net_dir: Option<PathBuf>,
    paper_scale: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            preset: String::new(),
            seed: 0,
            seeds: 10,
            train_seed: 0,
            net_dir: None,
            paper_scale: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
struct TrainSettings {
    dataset: Option<DatasetSpec>,
    net: Option<NetConfig>,
    train: uasep::embednet::TrainConfig,
}

enum Failure {
    Usage(String),
    Data(String),
    Gate(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter { .. } | Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
}

fn print_effective<T: Serialize>(cfg: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(cfg).map_err(|e| Failure::Data(e.to_string()))?;
    println!("effective config: {text}");
    Ok(())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    Ok(write_atomic(path, |p| {
        std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })
    })?)
}

fn run_gen(args: GenArgs, seed: Option<u64>, config: Option<&Path>) -> CliResult<()> {
    let mut cfg: GenConfig = load_config(config)?;
    if let Some(p) = args.preset {
        cfg.preset = p;
    }
    if let Some(s) = args.snr {
        cfg.snr_db = Some(s);
    }
    if let Some(n) = args.sources {
        cfg.sources = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    print_effective(&cfg)?;
    let snr = cfg.snr_db.unwrap_or(f64::INFINITY);
    let scenario: Scenario = match cfg.preset.as_str() {
        "lfm3" => lfm3_scenario(snr, cfg.seed)?,
        "desk" => desk_scenario(Scale::Desk, cfg.sources, snr, cfg.seed)?,
        other => return Err(Failure::Usage(format!("unknown gen preset `{other}` (expected lfm3, desk)"))),
    };
    create_dir(&args.out)?;
    if cfg.preset == "lfm3" {
        for (i, spec) in lfm3_specs().iter().enumerate() {
            let x = uasep::signals::gen_lfm(spec)?;
            write_atomic(&args.out.join(format!("lfm{}.wav", i + 1)), |p| write_wav(p, &x, BitDepth::Float32))?;
        }
    }
    for (i, r) in scenario.references.iter().enumerate() {
        write_atomic(&args.out.join(format!("reference_{i}.wav")), |p| write_wav(p, r, BitDepth::Float32))?;
    }
    write_atomic(&args.out.join("mixture.wav"), |p| {
        write_wav_channels(p, &scenario.observations, BitDepth::Float32)
    })?;
    println!("wrote {} references and a {}-channel mixture to {}", scenario.references.len(), scenario.observations.len(), args.out.display());
    Ok(())
}

fn run_separate(args: SeparateArgs, seed: Option<u64>, config: Option<&Path>) -> CliResult<()> {
    let mut cfg: PipelineConfig = load_config(config)?;
    if let Some(m) = args.method {
        cfg.method = m;
    }
    if let Some(k) = args.k {
        cfg.k_clusters = k;
    }
    if let Some(c) = args.checkpoint {
        cfg.checkpoint = Some(c);
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = args.out {
        cfg.output_dir = Some(o);
    }
    if cfg.method == Method::Deep && config.is_none() {
        if let Some(path) = &cfg.checkpoint {
            if let Some(trained) = load_checkpoint(path)?.meta.stft {
                cfg.stft = trained;
            }
        }
    }
    print_effective(&cfg)?;
    let observations = read_wav_channels(&args.input)?;
    let separator = Separator::new(cfg.clone())?;
    let sep = separator.separate(&observations, args.sources)?;
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    sep.write_outputs(&out)?;
    println!("wrote {} estimates to {}", sep.estimates.len(), out.display());
    if !args.references.is_empty() {
        let refs = read_all(&args.references)?;
        let report = evaluate(&sep, &refs)?;
        write_text(&out.join("report.csv"), &report.to_csv())?;
        report.write_json(out.join("report.json"))?;
        println!("mean xi {:.4}, mean PSR {:.4}", report.mean_xi, report.mean_psr);
    }
    Ok(())
}

fn read_all(paths: &[PathBuf]) -> CliResult<Vec<TimeSignal>> {
    Ok(paths.iter().map(read_wav).collect::<uasep::Result<Vec<_>>>()?)
}

fn run_train(args: TrainArgs, seed: Option<u64>, config: Option<&Path>) -> CliResult<()> {
    let mut settings: TrainSettings = load_config(config)?;
    let scale = if args.paper_scale { Scale::Paper } else { Scale::Desk };
    let train_seed = seed.unwrap_or(settings.train.seed);
    let mut data = match (&args.dataset, settings.dataset.take()) {
        (Some(path), _) => DatasetSpec::from_json_file(path)?,
        (None, Some(d)) => d,
        (None, None) => scale.dataset(train_seed),
    };
    if seed.is_some() {
        data.seed = train_seed;
    }
    if config.is_none() {
        settings.train = scale.train_config(train_seed);
    }
    settings.train.seed = train_seed;
    if let Some(e) = args.epochs {
        settings.train.epochs = e;
    }
    if args.init_only {
        settings.train.epochs = 0;
    }
    let net = settings.net.unwrap_or_else(|| scale.net_config(args.arch, data.freq_bins()));
    let effective = TrainSettings {
        dataset: Some(data.clone()),
        net: Some(net),
        train: settings.train.clone(),
    };
    print_effective(&effective)?;
    let outcome = train(&data, &settings.train, &net, &args.out)?;
    println!("checkpoint {}", outcome.checkpoint.display());
    println!("tensor digest {}", outcome.params.digest());
    Ok(())
}

fn run_eval(args: EvalArgs, config: Option<&Path>) -> CliResult<()> {
    let cfg: EvalConfig = load_config(config)?;
    print_effective(&cfg)?;
    if args.estimates.len() != args.references.len() {
        return Err(Failure::Usage(format!(
            "{} estimates for {} references",
            args.estimates.len(),
            args.references.len()
        )));
    }
    let refs = read_all(&args.references)?;
    let len = refs[0].len();
    let estimates: Vec<TimeSignal> = read_all(&args.estimates)?.iter().map(|e| e.resized(len)).collect();
    let mixture = match &args.mixture {
        Some(p) => read_wav(p)?.resized(len),
        None => refs[1..].iter().try_fold(refs[0].clone(), |acc, r| acc.add(r))?,
    };
    let spec = |x: &TimeSignal| stft(x, &cfg.stft);
    let mix_spec = spec(&mixture)?;
    let targets = refs.iter().map(spec).collect::<uasep::Result<Vec<Spectrogram>>>()?;
    let est_specs = estimates.iter().map(spec).collect::<uasep::Result<Vec<Spectrogram>>>()?;
    let floor = cfg.floor_db.unwrap_or(-120.0);
    let masks = (0..estimates.len())
        .map(|i| ideal_binary_mask(&est_specs, i, floor))
        .collect::<uasep::Result<Vec<_>>>()?;
    let report = align_and_report(&estimates, &refs, &masks, &targets, &mix_spec)?;
    print!("{}", report.to_csv());
    if let Some(out) = args.out {
        create_dir(&out)?;
        write_text(&out.join("report.csv"), &report.to_csv())?;
        report.write_json(out.join("report.json"))?;
    }
    Ok(())
}

fn run_experiment(args: ExperimentArgs, seed: Option<u64>, config: Option<&Path>) -> CliResult<()> {
    let mut settings: ExperimentSettings = load_config(config)?;
    settings.preset = args.preset;
    if let Some(s) = seed {
        settings.seed = s;
    }
    if let Some(n) = args.seeds {
        settings.seeds = n;
    }
    if let Some(d) = args.net_dir {
        settings.net_dir = Some(d);
    }
    settings.paper_scale |= args.paper_scale;
    if !PRESETS.contains(&settings.preset.as_str()) {
        return Err(Failure::Usage(format!(
            "unknown preset `{}`; expected one of {}",
            settings.preset,
            PRESETS.join(", ")
        )));
    }
    if settings.seeds == 0 {
        return Err(Failure::Usage("--seeds must be positive".into()));
    }
    print_effective(&settings)?;
    let cfg = ExperimentConfig {
        seeds: (settings.seed..settings.seed + settings.seeds as u64).collect(),
        net_dir: settings.net_dir.clone().unwrap_or_else(|| args.out.join("nets")),
        train_seed: settings.train_seed,
        scale: if settings.paper_scale { Scale::Paper } else { Scale::Desk },
    };
    let report = experiments::run_preset(&settings.preset, &cfg)?;
    for path in report.write(&args.out)? {
        println!("wrote {}", path.display());
    }
    print!("{}", report.summary_csv());
    let verdict = if report.gate.passed { "PASS" } else { "FAIL" };
    println!("gate {verdict}: {}", report.gate.detail);
    if report.gate.passed {
        Ok(())
    } else {
        Err(Failure::Gate(report.gate.detail))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::Gen(a) => run_gen(a, cli.seed, config),
        Command::Separate(a) => run_separate(a, cli.seed, config),
        Command::Train(a) => run_train(a, cli.seed, config),
        Command::Eval(a) => run_eval(a, config),
        Command::Experiment(a) => run_experiment(a, cli.seed, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Gate(m)) => {
            eprintln!("gate failed: {m}");
            ExitCode::from(4)
        }
    }
}
