//! Single-direction recurrent layers: forward over a sequence with a cache,
//! and backpropagation through time.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    /// `h_t = tanh(W_x x_t + W_h h_{t-1} + b)`.
    Elman,
    /// Peephole LSTM with diagonal cell-state weights.
    Lstm,
}

impl CellKind {
    /// Stacked gate blocks in `w_x`, `w_h` and `b`.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Elman => 1,
            CellKind::Lstm => 4,
        }
    }

    fn peepholes(self) -> usize {
        match self {
            CellKind::Elman => 0,
            CellKind::Lstm => 3,
        }
    }
}

/// Weights of one recurrent direction. LSTM gate blocks are stacked in the
/// order input, forget, candidate, output; `peep` rows are input, forget and
/// output peepholes.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentParams {
    pub kind: CellKind,
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub peep: Array2<f64>,
    pub b: Array1<f64>,
}

impl RecurrentParams {
    pub fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        let g = kind.gates() * hidden;
        Self {
            kind,
            w_x: Array2::zeros((g, input)),
            w_h: Array2::zeros((g, hidden)),
            peep: Array2::zeros((kind.peepholes(), hidden)),
            b: Array1::zeros(g),
        }
    }

    /// Uniform in `+-1/sqrt(fan_in)`, biases zero.
    pub fn init(kind: CellKind, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(kind, input, hidden);
        let bx = 1.0 / (input as f64).sqrt();
        let bh = 1.0 / (hidden as f64).sqrt();
        p.w_x.mapv_inplace(|_| rng.random_range(-bx..=bx));
        p.w_h.mapv_inplace(|_| rng.random_range(-bh..=bh));
        p.peep.mapv_inplace(|_| rng.random_range(-bh..=bh));
        p
    }

    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_x.ncols()
    }

    pub(crate) fn tensors(&self) -> [(&'static str, &[f64], Vec<usize>); 4] {
        [
            ("w_x", self.w_x.as_slice().unwrap(), self.w_x.shape().to_vec()),
            ("w_h", self.w_h.as_slice().unwrap(), self.w_h.shape().to_vec()),
            ("peep", self.peep.as_slice().unwrap(), self.peep.shape().to_vec()),
            ("b", self.b.as_slice().unwrap(), self.b.shape().to_vec()),
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w_x.as_slice_mut().unwrap(),
            self.w_h.as_slice_mut().unwrap(),
            self.peep.as_slice_mut().unwrap(),
            self.b.as_slice_mut().unwrap(),
        ]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate activations and states of one LSTM step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub o: Array1<f64>,
    pub c: Array1<f64>,
    pub h: Array1<f64>,
}

/// Applies the gate nonlinearities to the stacked pre-activation `a`
/// (input, recurrent and bias terms, no peepholes).
fn lstm_gates(a: ArrayView1<f64>, c_prev: ArrayView1<f64>, peep: &Array2<f64>, out: &mut LstmStep) {
    let h = c_prev.len();
    for u in 0..h {
        let i = sigmoid(a[u] + peep[[0, u]] * c_prev[u]);
        let f = sigmoid(a[h + u] + peep[[1, u]] * c_prev[u]);
        let g = a[2 * h + u].tanh();
        let c = f * c_prev[u] + i * g;
        let o = sigmoid(a[3 * h + u] + peep[[2, u]] * c);
        out.i[u] = i;
        out.f[u] = f;
        out.g[u] = g;
        out.o[u] = o;
        out.c[u] = c;
        out.h[u] = o * c.tanh();
    }
}

/// One LSTM step from input `x` and previous state.
pub fn lstm_cell_forward(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    p: &RecurrentParams,
) -> LstmStep {
    let a = p.w_x.dot(&x) + p.w_h.dot(&h_prev) + &p.b;
    let n = p.hidden();
    let mut step = LstmStep {
        i: Array1::zeros(n),
        f: Array1::zeros(n),
        g: Array1::zeros(n),
        o: Array1::zeros(n),
        c: Array1::zeros(n),
        h: Array1::zeros(n),
    };
    lstm_gates(a.view(), c_prev, &p.peep, &mut step);
    step
}

/// Per-step values kept for the backward pass, in processing order.
#[derive(Debug, Clone)]
pub(crate) struct SeqCache {
    pub input: Array2<f64>,
    pub h: Array2<f64>,
    /// LSTM only: cell states and stacked gate activations `[i, f, g, o]`.
    pub c: Array2<f64>,
    pub gates: Array2<f64>,
}

/// Runs the layer from row 0 to row T-1 of `input`, starting from zero state.
pub(crate) fn run(p: &RecurrentParams, input: Array2<f64>) -> SeqCache {
    let t_len = input.nrows();
    let n = p.hidden();
    let mut pre = input.dot(&p.w_x.t());
    pre += &p.b;
    let mut h = Array2::zeros((t_len, n));
    match p.kind {
        CellKind::Elman => {
            let mut h_prev = Array1::zeros(n);
            for t in 0..t_len {
                let a = &pre.row(t) + &p.w_h.dot(&h_prev);
                h_prev = a.mapv(f64::tanh);
                h.row_mut(t).assign(&h_prev);
            }
            SeqCache {
                input,
                h,
                c: Array2::zeros((0, n)),
                gates: Array2::zeros((0, n)),
            }
        }
        CellKind::Lstm => {
            let mut c = Array2::zeros((t_len, n));
            let mut gates = Array2::zeros((t_len, 4 * n));
            let mut step = LstmStep {
                i: Array1::zeros(n),
                f: Array1::zeros(n),
                g: Array1::zeros(n),
                o: Array1::zeros(n),
                c: Array1::zeros(n),
                h: Array1::zeros(n),
            };
            for t in 0..t_len {
                let a = &pre.row(t) + &p.w_h.dot(&step.h);
                let c_prev = step.c.clone();
                lstm_gates(a.view(), c_prev.view(), &p.peep, &mut step);
                h.row_mut(t).assign(&step.h);
                c.row_mut(t).assign(&step.c);
                let mut gr = gates.row_mut(t);
                gr.slice_mut(s![..n]).assign(&step.i);
                gr.slice_mut(s![n..2 * n]).assign(&step.f);
                gr.slice_mut(s![2 * n..3 * n]).assign(&step.g);
                gr.slice_mut(s![3 * n..]).assign(&step.o);
            }
            SeqCache { input, h, c, gates }
        }
    }
}

/// Row `t` holds row `t - 1` of `m`; row 0 is zero.
fn shifted(m: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(m.raw_dim());
    if m.nrows() > 1 {
        out.slice_mut(s![1.., ..]).assign(&m.slice(s![..-1, ..]));
    }
    out
}

/// BPTT given `dh[t] = dL/dh_t` from the layers above. Returns the parameter
/// gradients and `dL/dinput`.
pub(crate) fn backprop(p: &RecurrentParams, cache: &SeqCache, dh_out: ArrayView2<f64>) -> (RecurrentParams, Array2<f64>) {
    let t_len = cache.h.nrows();
    let n = p.hidden();
    let g = p.kind.gates() * n;
    let mut grad = RecurrentParams::zeros(p.kind, p.input(), n);
    let mut da = Array2::<f64>::zeros((t_len, g));
    let mut dh_next = Array1::<f64>::zeros(n);
    match p.kind {
        CellKind::Elman => {
            for t in (0..t_len).rev() {
                let dh = &dh_out.row(t) + &dh_next;
                let mut row = da.row_mut(t);
                for u in 0..n {
                    let hv = cache.h[[t, u]];
                    row[u] = dh[u] * (1.0 - hv * hv);
                }
                dh_next = p.w_h.t().dot(&row);
            }
        }
        CellKind::Lstm => {
            let mut dc_next = Array1::<f64>::zeros(n);
            for t in (0..t_len).rev() {
                let dh = &dh_out.row(t) + &dh_next;
                let gr = cache.gates.row(t);
                let mut row = da.row_mut(t);
                for u in 0..n {
                    let (i, f, gg, o) = (gr[u], gr[n + u], gr[2 * n + u], gr[3 * n + u]);
                    let c = cache.c[[t, u]];
                    let c_prev = if t > 0 { cache.c[[t - 1, u]] } else { 0.0 };
                    let tc = c.tanh();
                    let da_o = dh[u] * tc * o * (1.0 - o);
                    let mut dc = dc_next[u] + dh[u] * o * (1.0 - tc * tc) + da_o * p.peep[[2, u]];
                    grad.peep[[2, u]] += da_o * c;
                    let da_i = dc * gg * i * (1.0 - i);
                    let da_f = dc * c_prev * f * (1.0 - f);
                    let da_g = dc * i * (1.0 - gg * gg);
                    grad.peep[[0, u]] += da_i * c_prev;
                    grad.peep[[1, u]] += da_f * c_prev;
                    dc = dc * f + da_i * p.peep[[0, u]] + da_f * p.peep[[1, u]];
                    dc_next[u] = dc;
                    row[u] = da_i;
                    row[n + u] = da_f;
                    row[2 * n + u] = da_g;
                    row[3 * n + u] = da_o;
                }
                dh_next = p.w_h.t().dot(&row);
            }
        }
    }
    grad.w_x = super::standard(da.t().dot(&cache.input));
    grad.w_h = super::standard(da.t().dot(&shifted(&cache.h)));
    grad.b = da.sum_axis(Axis(0));
    let d_input = da.dot(&p.w_x);
    (grad, d_input)
}
