//! End-to-end separation: analysis, clustering of per-bin features or
//! embeddings, masking, resynthesis and scoring against references.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::clustering::{kmeans, ClusterAssignment, KMeansConfig};
use crate::embednet::{load_checkpoint, NetworkParams};
use crate::error::{Error, Result};
use crate::features::{features_normalized, FeatureConfig};
use crate::masking::{apply_mask, masks_from_assignment, BinaryMask};
use crate::metrics::{align_and_report, best_assignment, similarity_matrix, SeparationReport};
use crate::signals::{write_wav, BitDepth, TimeSignal};
use crate::tfr::{istft, stft, write_magnitude_pgm, write_spectrogram, Spectrogram, StftConfig};
use crate::training::network_input;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Geometric features from two or more observations.
    #[default]
    Classic,
    /// Learned embeddings of one observation.
    Deep,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classic" => Ok(Method::Classic),
            "deep" => Ok(Method::Deep),
            other => Err(format!("unknown method `{other}` (expected classic, deep)")),
        }
    }
}

/// Number of clusters: a fixed count, or `auto` for the source count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterCount {
    #[default]
    Auto,
    Fixed(usize),
}

impl ClusterCount {
    pub fn resolve(self, sources: usize) -> usize {
        match self {
            ClusterCount::Auto => sources,
            ClusterCount::Fixed(k) => k,
        }
    }
}

impl fmt::Display for ClusterCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterCount::Auto => f.write_str("auto"),
            ClusterCount::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for ClusterCount {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(ClusterCount::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(ClusterCount::Fixed(k)),
            _ => Err(format!("`{s}` is neither `auto` nor a positive count")),
        }
    }
}

impl Serialize for ClusterCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ClusterCount::Auto => s.serialize_str("auto"),
            ClusterCount::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for ClusterCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(usize),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(0) => Err(serde::de::Error::custom("k_clusters must be at least 1")),
            Repr::Count(k) => Ok(ClusterCount::Fixed(k)),
            Repr::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub stft: StftConfig,
    pub method: Method,
    pub k_clusters: ClusterCount,
    /// Required by the deep method.
    pub checkpoint: Option<PathBuf>,
    /// Reference channel and geometry for classic features. Its `floor_db`
    /// sets the clustering weight floor for both methods.
    pub features: FeatureConfig,
    /// k-means seed.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            method: Method::Classic,
            k_clusters: ClusterCount::Auto,
            checkpoint: None,
            features: FeatureConfig::default(),
            seed: 0,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.method == Method::Deep && self.checkpoint.is_none() {
            return Err(Error::Config("the deep method needs a checkpoint".into()));
        }
        if self.k_clusters == ClusterCount::Fixed(0) {
            return Err(Error::param("k_clusters", "must be at least 1"));
        }
        Ok(())
    }
}

/// Output of one separation run.
#[derive(Debug, Clone)]
pub struct Separation {
    /// One signal per cluster, each the length of the input.
    pub estimates: Vec<TimeSignal>,
    pub masks: Vec<BinaryMask>,
    /// Spectrogram of the observation the masks were applied to.
    pub mixture: Spectrogram,
    pub assignment: ClusterAssignment,
}

impl Separation {
    /// Keeps the listed clusters, in the given order.
    pub fn select(&self, keep: &[usize]) -> Separation {
        Separation {
            estimates: keep.iter().map(|&i| self.estimates[i].clone()).collect(),
            masks: keep.iter().map(|&i| self.masks[i].clone()).collect(),
            mixture: self.mixture.clone(),
            assignment: self.assignment.clone(),
        }
    }

    /// Writes `estimate_<i>.wav`, `mask_<i>.pgm`, `estimate_<i>.spec` and
    /// `mixture.spec`, each file atomically.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("mixture.spec"), |p| write_spectrogram(p, &self.mixture))?;
        write_atomic(&dir.join("mixture.pgm"), |p| write_magnitude_pgm(p, &self.mixture, 80.0))?;
        for (i, (x, mask)) in self.estimates.iter().zip(&self.masks).enumerate() {
            write_atomic(&dir.join(format!("estimate_{i}.wav")), |p| write_wav(p, x, BitDepth::Float32))?;
            write_atomic(&dir.join(format!("mask_{i}.pgm")), |p| mask.write_pgm(p))?;
            let masked = apply_mask(mask, &self.mixture)?;
            write_atomic(&dir.join(format!("estimate_{i}.spec")), |p| write_spectrogram(p, &masked))?;
        }
        Ok(())
    }
}

/// Runs `write` against a sibling temporary path, then renames it over `path`.
pub fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Clustering weight per bin: 1 where the magnitude is within `floor_db` of
/// the loudest bin, else 0.
pub fn energy_weights(s: &Spectrogram, floor_db: f64) -> Vec<f64> {
    let mags = s.magnitudes();
    let peak = mags.iter().cloned().fold(0.0, f64::max);
    let threshold = peak * 10f64.powf(floor_db / 20.0);
    mags.iter()
        .map(|&a| if a > 0.0 && a >= threshold { 1.0 } else { 0.0 })
        .collect()
}

/// A configured separator; holds the network for the deep method.
#[derive(Debug, Clone)]
pub struct Separator {
    cfg: PipelineConfig,
    net: Option<NetworkParams>,
}

impl Separator {
    /// Loads the checkpoint when the method is deep.
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let net = match (&cfg.method, &cfg.checkpoint) {
            (Method::Deep, Some(path)) => {
                let ckpt = load_checkpoint(path)?;
                if let Some(trained) = ckpt.meta.stft {
                    if trained != cfg.stft {
                        return Err(Error::Config(format!(
                            "checkpoint was trained with {} ms / {} ms {:?} frames, pipeline uses {} ms / {} ms {:?}",
                            trained.frame_ms, trained.hop_ms, trained.window, cfg.stft.frame_ms, cfg.stft.hop_ms, cfg.stft.window
                        )));
                    }
                }
                Some(ckpt.params)
            }
            _ => None,
        };
        Ok(Self { cfg, net })
    }

    /// Deep separator around an in-memory network.
    pub fn with_network(cfg: PipelineConfig, net: NetworkParams) -> Result<Self> {
        if cfg.k_clusters == ClusterCount::Fixed(0) {
            return Err(Error::param("k_clusters", "must be at least 1"));
        }
        Ok(Self {
            cfg: PipelineConfig {
                method: Method::Deep,
                ..cfg
            },
            net: Some(net),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn network(&self) -> Option<&NetworkParams> {
        self.net.as_ref()
    }

    /// Separates `observations` (one per sensor; the deep method reads the
    /// reference channel only) into `sources` estimates, or `k_clusters`
    /// when that is fixed.
    pub fn separate(&self, observations: &[TimeSignal], sources: usize) -> Result<Separation> {
        let k = self.cfg.k_clusters.resolve(sources);
        if k == 0 {
            return Err(Error::param("k_clusters", "resolved to 0 clusters"));
        }
        if observations.is_empty() {
            return Err(Error::param("observations", "at least one observation is required"));
        }
        let reference = self.cfg.features.ref_channel;
        if reference >= observations.len() {
            return Err(Error::param(
                "ref_channel",
                format!("{reference} but only {} observations", observations.len()),
            ));
        }
        let (mixture, rows, weights) = match self.cfg.method {
            Method::Classic => {
                let specs = observations
                    .iter()
                    .map(|x| stft(x, &self.cfg.stft))
                    .collect::<Result<Vec<_>>>()?;
                let fm = features_normalized(&specs, &self.cfg.features)?;
                let mixture = specs.into_iter().nth(reference).unwrap();
                (mixture, fm.rows, fm.weights)
            }
            Method::Deep => {
                let net = self
                    .net
                    .as_ref()
                    .ok_or_else(|| Error::Config("the deep method needs a checkpoint".into()))?;
                let x = &observations[reference];
                let mixture = stft(x, &self.cfg.stft)?;
                if mixture.freq_bins() != net.config.freq_bins {
                    return Err(Error::Config(format!(
                        "checkpoint expects {} frequency bins, the STFT produces {}",
                        net.config.freq_bins,
                        mixture.freq_bins()
                    )));
                }
                let peak = x.peak();
                let scaled = if peak > 0.0 { x.scaled(1.0 / peak) } else { x.clone() };
                let (_, frames) = network_input(&scaled, &self.cfg.stft)?;
                let embedding = net.embed(frames.view())?;
                let weights = energy_weights(&mixture, self.cfg.features.floor_db);
                (mixture, embedding.rows, weights)
            }
        };
        self.cluster_and_mask(mixture, rows, &weights, k)
    }

    fn cluster_and_mask(&self, mixture: Spectrogram, rows: Array2<f64>, weights: &[f64], k: usize) -> Result<Separation> {
        let assignment = kmeans(rows.view(), weights, &KMeansConfig::new(k, self.cfg.seed))?;
        let (frames, bins) = mixture.shape();
        let masks = masks_from_assignment(&assignment, frames, bins)?;
        let estimates = masks
            .iter()
            .map(|m| istft(&apply_mask(m, &mixture)?).map(|x| x.resized(mixture.signal_len())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Separation {
            estimates,
            masks,
            mixture,
            assignment,
        })
    }
}

/// Indices of the `m` clusters to keep. With references, the clusters
/// matched by the best total similarity, in reference order; without, the
/// `m` most energetic, in cluster order.
pub fn keep_clusters(sep: &Separation, references: Option<&[TimeSignal]>, m: usize) -> Result<Vec<usize>> {
    let n = sep.estimates.len();
    if m > n {
        return Err(Error::param("sources", format!("{m} sources but only {n} clusters")));
    }
    if let Some(refs) = references {
        if refs.len() != m {
            return Err(Error::param("references", format!("{} references for {m} sources", refs.len())));
        }
        let xi = similarity_matrix(&sep.estimates, refs)?;
        return best_assignment(&xi);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sep.estimates[b].energy().total_cmp(&sep.estimates[a].energy()).then(a.cmp(&b)));
    order.truncate(m);
    order.sort_unstable();
    Ok(order)
}

/// Scores a separation against time-domain `references`, each as it appears
/// in the analysed observation. Surplus clusters are discarded first.
pub fn evaluate(sep: &Separation, references: &[TimeSignal]) -> Result<SeparationReport> {
    let mix = &sep.mixture;
    let cfg = StftConfig::from_points(mix.frame_len(), mix.hop(), mix.window(), mix.sample_rate());
    let targets = references
        .iter()
        .map(|r| stft(&r.resized(mix.signal_len()), &cfg))
        .collect::<Result<Vec<_>>>()?;
    let kept = if sep.estimates.len() > references.len() {
        let keep = keep_clusters(sep, Some(references), references.len())?;
        sep.select(&keep)
    } else {
        sep.clone()
    };
    align_and_report(&kept.estimates, references, &kept.masks, &targets, mix)
}
