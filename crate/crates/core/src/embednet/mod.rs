//! Recurrent embedding networks. Each frame of log-magnitudes is mapped to
//! `F` unit vectors of dimension `K`, one per frequency bin, so that bins
//! dominated by the same source land close together.
//!
//! Layout: `layers` recurrent layers (one or two directions each), then a
//! dense layer producing `F*K` values per frame, an elementwise activation,
//! and per-bin L2 normalization.

mod cell;
mod checkpoint;
mod loss;
mod optim;

use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::LabelMatrix;

pub use cell::{lstm_cell_forward, CellKind, LstmStep, RecurrentParams};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use loss::{dc_loss, dc_loss_grad};
pub use optim::{dropout, sgd_step, TrainConfig};

use cell::SeqCache;

/// Rows with a smaller pre-normalization norm become zero vectors.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Rnn,
    Lstm,
    Bilstm,
}

impl Architecture {
    pub fn cell(self) -> CellKind {
        match self {
            Architecture::Rnn => CellKind::Elman,
            Architecture::Lstm | Architecture::Bilstm => CellKind::Lstm,
        }
    }

    pub fn directions(self) -> usize {
        match self {
            Architecture::Bilstm => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Rnn => "rnn",
            Architecture::Lstm => "lstm",
            Architecture::Bilstm => "bilstm",
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rnn" => Ok(Self::Rnn),
            "lstm" => Ok(Self::Lstm),
            "bilstm" => Ok(Self::Bilstm),
            other => Err(Error::param("architecture", format!("unknown architecture '{other}'"))),
        }
    }
}

/// How the two directions of a bidirectional layer are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    #[default]
    Concat,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub architecture: Architecture,
    pub layers: usize,
    /// Units per direction.
    pub hidden: usize,
    pub embed_dim: usize,
    pub freq_bins: usize,
    #[serde(default)]
    pub combine: Combine,
    #[serde(default)]
    pub activation: OutputActivation,
}

impl NetConfig {
    pub fn new(architecture: Architecture, freq_bins: usize, hidden: usize, embed_dim: usize) -> Self {
        Self {
            architecture,
            layers: 1,
            hidden,
            embed_dim,
            freq_bins,
            combine: Combine::Concat,
            activation: OutputActivation::Relu,
        }
    }

    /// One layer of 64 units per direction, `K = 10`.
    pub fn desk(architecture: Architecture, freq_bins: usize) -> Self {
        Self::new(architecture, freq_bins, 64, 10)
    }

    /// Two layers of 600 units, `K = 100`.
    pub fn paper(architecture: Architecture, freq_bins: usize) -> Self {
        Self {
            layers: 2,
            ..Self::new(architecture, freq_bins, 600, 100)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("embed_dim", self.embed_dim),
            ("freq_bins", self.freq_bins),
        ] {
            if v == 0 {
                return Err(Error::param(name, "must be positive"));
            }
        }
        Ok(())
    }

    /// Width of a layer's combined output.
    pub fn layer_output(&self) -> usize {
        match (self.architecture.directions(), self.combine) {
            (2, Combine::Concat) => 2 * self.hidden,
            _ => self.hidden,
        }
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.freq_bins
        } else {
            self.layer_output()
        }
    }
}

/// Per-bin standardization applied to input frames; fitted to training data
/// and not trained.
#[derive(Debug, Clone, PartialEq)]
pub struct InputNorm {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl InputNorm {
    pub fn identity(freq_bins: usize) -> Self {
        Self {
            mean: Array1::zeros(freq_bins),
            std: Array1::ones(freq_bins),
        }
    }

    /// Mean and standard deviation per column over all rows of all inputs.
    pub fn fit<'a>(frames: impl IntoIterator<Item = ArrayView2<'a, f64>>, freq_bins: usize) -> Self {
        let mut sum = Array1::<f64>::zeros(freq_bins);
        let mut sq = Array1::<f64>::zeros(freq_bins);
        let mut n = 0usize;
        for m in frames {
            sum += &m.sum_axis(Axis(0));
            sq += &m.mapv(|v| v * v).sum_axis(Axis(0));
            n += m.nrows();
        }
        if n == 0 {
            return Self::identity(freq_bins);
        }
        let mean = &sum / n as f64;
        let std = (&sq / n as f64 - &mean * &mean).mapv(|v| v.max(0.0).sqrt().max(1e-6));
        Self { mean, std }
    }

    fn apply(&self, frames: ArrayView2<f64>) -> Array2<f64> {
        (&frames - &self.mean) / &self.std
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: NetConfig,
    pub input_norm: InputNorm,
    /// `cells[layer][direction]`; direction 1 runs backward in time.
    pub cells: Vec<Vec<RecurrentParams>>,
    /// `(F*K) x layer_output`.
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
}

/// `(T*F) x K` unit-norm rows, row index `t * F + f`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: Array2<f64>,
    pub frames: usize,
    pub freq_bins: usize,
}

impl EmbeddingMatrix {
    pub fn embed_dim(&self) -> usize {
        self.rows.ncols()
    }
}

/// Dropout keep-masks for one forward pass, already scaled.
#[derive(Debug, Clone, Default)]
pub(crate) struct DropoutMasks {
    pub input: Option<Array2<f64>>,
    pub hidden: Vec<Option<Array2<f64>>>,
}

impl DropoutMasks {
    pub fn sample(cfg: &NetConfig, frames: usize, input_rate: f64, hidden_rate: f64, rng: &mut ChaCha8Rng) -> Self {
        let input = optim::dropout_mask((frames, cfg.freq_bins), input_rate, rng);
        let hidden = (0..cfg.layers)
            .map(|_| optim::dropout_mask((frames, cfg.layer_output()), hidden_rate, rng))
            .collect();
        Self { input, hidden }
    }
}

struct ForwardCache {
    /// Per layer, per direction, in processing order.
    seqs: Vec<Vec<SeqCache>>,
    top: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
    norms: Vec<f64>,
    embed: Array2<f64>,
}

/// Row-major copy unless already row-major.
pub(crate) fn standard(m: Array2<f64>) -> Array2<f64> {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

fn reversed(m: &Array2<f64>) -> Array2<f64> {
    m.slice(s![..;-1, ..]).to_owned()
}

fn apply_mask(x: Array2<f64>, mask: Option<&Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

impl NetworkParams {
    /// Seeded uniform initialization in `+-1/sqrt(fan_in)`; biases zero.
    pub fn init(config: &NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = (0..config.layers)
            .map(|l| {
                (0..config.architecture.directions())
                    .map(|_| RecurrentParams::init(config.architecture.cell(), config.layer_input(l), config.hidden, &mut rng))
                    .collect()
            })
            .collect();
        let d = config.layer_output();
        let bound = 1.0 / (d as f64).sqrt();
        let dense_w = Array2::from_shape_simple_fn((config.freq_bins * config.embed_dim, d), || rng.random_range(-bound..=bound));
        Ok(Self {
            config: *config,
            input_norm: InputNorm::identity(config.freq_bins),
            cells,
            dense_w,
            dense_b: Array1::zeros(config.freq_bins * config.embed_dim),
        })
    }

    /// Same shapes, every trainable tensor zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.trainable_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Trainable tensors in declared order: for each layer and direction
    /// `w_x, w_h, peep, b`, then `dense_w, dense_b`.
    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.cells {
            for c in layer {
                out.extend(c.tensors().into_iter().map(|(_, d, _)| d));
            }
        }
        out.push(self.dense_w.as_slice().unwrap());
        out.push(self.dense_b.as_slice().unwrap());
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.cells {
            for c in layer {
                out.extend(c.tensors_mut());
            }
        }
        out.push(self.dense_w.as_slice_mut().unwrap());
        out.push(self.dense_b.as_slice_mut().unwrap());
        out
    }

    /// Every stored tensor with name and shape, input normalization first.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let f = self.config.freq_bins;
        let mut out = vec![
            ("input_mean".to_string(), vec![f], self.input_norm.mean.as_slice().unwrap()),
            ("input_std".to_string(), vec![f], self.input_norm.std.as_slice().unwrap()),
        ];
        for (l, layer) in self.cells.iter().enumerate() {
            for (d, c) in layer.iter().enumerate() {
                let dir = if d == 0 { "fwd" } else { "bwd" };
                for (name, data, shape) in c.tensors() {
                    out.push((format!("layer{l}.{dir}.{name}"), shape, data));
                }
            }
        }
        out.push(("dense_w".into(), self.dense_w.shape().to_vec(), self.dense_w.as_slice().unwrap()));
        out.push(("dense_b".into(), self.dense_b.shape().to_vec(), self.dense_b.as_slice().unwrap()));
        out
    }

    pub(crate) fn named_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let Self {
            input_norm,
            cells,
            dense_w,
            dense_b,
            ..
        } = self;
        let mut out: Vec<&mut [f64]> = vec![
            input_norm.mean.as_slice_mut().unwrap(),
            input_norm.std.as_slice_mut().unwrap(),
        ];
        for layer in cells {
            for c in layer {
                out.extend(c.tensors_mut());
            }
        }
        out.push(dense_w.as_slice_mut().unwrap());
        out.push(dense_b.as_slice_mut().unwrap());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, _, d)| d.iter().all(|v| v.is_finite()))
    }

    fn check_frames(&self, frames: ArrayView2<f64>) -> Result<()> {
        if frames.ncols() != self.config.freq_bins {
            return Err(Error::param(
                "frames",
                format!("{} bins per frame, network expects {}", frames.ncols(), self.config.freq_bins),
            ));
        }
        if frames.nrows() == 0 {
            return Err(Error::param("frames", "empty sequence"));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("frames", "non-finite input"));
        }
        Ok(())
    }

    fn forward_cached(&self, frames: ArrayView2<f64>, masks: &DropoutMasks) -> ForwardCache {
        let cfg = &self.config;
        let t_len = frames.nrows();
        let (f, k) = (cfg.freq_bins, cfg.embed_dim);
        let mut x = apply_mask(self.input_norm.apply(frames), masks.input.as_ref());
        let mut seqs = Vec::with_capacity(cfg.layers);
        for (l, layer) in self.cells.iter().enumerate() {
            let fwd = cell::run(&layer[0], x.clone());
            let out = if layer.len() == 2 {
                let bwd = cell::run(&layer[1], reversed(&x));
                let hb = reversed(&bwd.h);
                let combined = match cfg.combine {
                    Combine::Concat => ndarray::concatenate![Axis(1), fwd.h, hb],
                    Combine::Sum => &fwd.h + &hb,
                };
                seqs.push(vec![fwd, bwd]);
                combined
            } else {
                let out = fwd.h.clone();
                seqs.push(vec![fwd]);
                out
            };
            x = apply_mask(out, masks.hidden.get(l).and_then(|m| m.as_ref()));
        }
        let mut pre = x.dot(&self.dense_w.t());
        pre += &self.dense_b;
        let act = match cfg.activation {
            OutputActivation::Relu => pre.mapv(|v| v.max(0.0)),
            OutputActivation::Tanh => pre.mapv(f64::tanh),
        };
        let mut embed = standard(act.clone()).into_shape_with_order((t_len * f, k)).unwrap();
        let mut norms = Vec::with_capacity(t_len * f);
        for mut row in embed.rows_mut() {
            let n = row.dot(&row).sqrt();
            norms.push(n);
            if n >= NORM_EPS {
                row /= n;
            } else {
                row.fill(0.0);
            }
        }
        ForwardCache {
            seqs,
            top: x,
            pre,
            act,
            norms,
            embed,
        }
    }

    /// Inference-mode embedding of a `T x F` log-magnitude matrix.
    pub fn embed(&self, frames: ArrayView2<f64>) -> Result<EmbeddingMatrix> {
        self.check_frames(frames)?;
        let cache = self.forward_cached(frames, &DropoutMasks::default());
        Ok(EmbeddingMatrix {
            rows: cache.embed,
            frames: frames.nrows(),
            freq_bins: self.config.freq_bins,
        })
    }

    fn backward(&self, cache: &ForwardCache, masks: &DropoutMasks, d_embed: ArrayView2<f64>) -> NetworkParams {
        let cfg = &self.config;
        let (f, k, h) = (cfg.freq_bins, cfg.embed_dim, cfg.hidden);
        let t_len = cache.act.nrows();
        let mut grads = self.zeros_like();

        // through the row normalization
        let mut d_act = Array2::<f64>::zeros((t_len * f, k));
        for (r, mut out) in d_act.rows_mut().into_iter().enumerate() {
            let n = cache.norms[r];
            if n < NORM_EPS {
                continue;
            }
            let e = cache.embed.row(r);
            let g = d_embed.row(r);
            let proj = e.dot(&g);
            out.assign(&((&g - &(&e * proj)) / n));
        }
        let mut d_pre = d_act.into_shape_with_order((t_len, f * k)).unwrap();
        match cfg.activation {
            OutputActivation::Relu => ndarray::Zip::from(&mut d_pre).and(&cache.pre).for_each(|d, &p| {
                if p <= 0.0 {
                    *d = 0.0;
                }
            }),
            OutputActivation::Tanh => ndarray::Zip::from(&mut d_pre).and(&cache.act).for_each(|d, &a| *d *= 1.0 - a * a),
        }
        grads.dense_w = standard(d_pre.t().dot(&cache.top));
        grads.dense_b = d_pre.sum_axis(Axis(0));
        let mut d_top = d_pre.dot(&self.dense_w);

        for l in (0..cfg.layers).rev() {
            let d_out = apply_mask(d_top, masks.hidden.get(l).and_then(|m| m.as_ref()));
            let layer = &self.cells[l];
            let seq = &cache.seqs[l];
            let d_in = if layer.len() == 2 {
                let (dh_f, dh_b) = match cfg.combine {
                    Combine::Concat => (d_out.slice(s![.., ..h]).to_owned(), d_out.slice(s![.., h..]).to_owned()),
                    Combine::Sum => (d_out.clone(), d_out),
                };
                let (gf, dif) = cell::backprop(&layer[0], &seq[0], dh_f.view());
                let (gb, dib) = cell::backprop(&layer[1], &seq[1], reversed(&dh_b).view());
                grads.cells[l][0] = gf;
                grads.cells[l][1] = gb;
                dif + reversed(&dib)
            } else {
                let (g, di) = cell::backprop(&layer[0], &seq[0], d_out.view());
                grads.cells[l][0] = g;
                di
            };
            d_top = d_in;
        }
        grads
    }

    /// Loss and gradients for one sequence. `scale` multiplies both.
    pub(crate) fn loss_and_gradients_with(
        &self,
        frames: ArrayView2<f64>,
        labels: &LabelMatrix,
        masks: &DropoutMasks,
        scale: f64,
    ) -> Result<(f64, NetworkParams)> {
        self.check_frames(frames)?;
        let rows = frames.nrows() * self.config.freq_bins;
        if labels.onehot.nrows() != rows || labels.weights.len() != rows {
            return Err(Error::param(
                "labels",
                format!("{} label rows for {rows} bins", labels.onehot.nrows()),
            ));
        }
        let cache = self.forward_cached(frames, masks);
        let (loss, mut d_embed) = loss::loss_and_grad(cache.embed.view(), labels.onehot.view(), &labels.weights);
        if scale != 1.0 {
            d_embed *= scale;
        }
        Ok((loss * scale, self.backward(&cache, masks, d_embed.view())))
    }

    /// Affinity loss of the inference-mode embedding and exact gradients of
    /// every trainable tensor.
    pub fn loss_and_gradients(&self, frames: ArrayView2<f64>, labels: &LabelMatrix) -> Result<(f64, NetworkParams)> {
        self.loss_and_gradients_with(frames, labels, &DropoutMasks::default(), 1.0)
    }

    /// Adds `other` into `self`, tensor by tensor.
    pub fn accumulate(&mut self, other: &NetworkParams) {
        for (a, b) in self.trainable_mut().into_iter().zip(other.trainable()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}
