//! Stacked LSTM binary classifier trained with backpropagation through time.
//!
//! Each layer uses the standard cell
//!
//! ```text
//! [i f g o] = [sigm sigm tanh sigm]([x_t, h_{t-1}] W + b)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! and the last top-layer hidden state is projected to one logit. Sequences are
//! processed independently (no state carried across windows). All parameters
//! live in one flat vector so the optimiser, the L1 penalty, checkpoints and
//! the finite-difference check share a single layout.

use std::fs;
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::WindowedDataset;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("empty dataset")]
    Empty,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub layers: usize,
    pub hidden_size: usize,
    pub back_days: usize,
    pub epochs: usize,
    /// Inter-layer dropout rate, training only.
    pub dropout: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// L1 penalty on weight matrices (biases excluded).
    pub l1_penalty: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            hidden_size: 32,
            back_days: 20,
            epochs: 20,
            dropout: 0.1,
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size: 32,
            l1_penalty: 0.0,
            seed: 0,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if self.layers == 0 || self.hidden_size == 0 || self.back_days == 0 || self.batch_size == 0 {
            return bad("layers, hidden_size, back_days and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.l1_penalty >= 0.0 && self.l1_penalty.is_finite()) {
            return bad("l1_penalty must be non-negative");
        }
        Ok(())
    }
}

/// A set of equal-length sequences with binary targets.
pub trait SequenceSource {
    fn len(&self) -> usize;
    fn seq_len(&self) -> usize;
    fn feature_dim(&self) -> usize;
    /// Row-major `seq_len x feature_dim`.
    fn sequence(&self, i: usize) -> &[f64];
    fn target(&self, i: usize) -> u8;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SequenceSource for WindowedDataset {
    fn len(&self) -> usize {
        WindowedDataset::len(self)
    }
    fn seq_len(&self) -> usize {
        self.back_days
    }
    fn feature_dim(&self) -> usize {
        WindowedDataset::feature_dim(self)
    }
    fn sequence(&self, i: usize) -> &[f64] {
        self.window(i)
    }
    fn target(&self, i: usize) -> u8 {
        self.targets[i]
    }
}

/// Owned in-memory sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    pub seq_len: usize,
    pub feature_dim: usize,
    pub data: Vec<Vec<f64>>,
    pub targets: Vec<u8>,
}

impl SequenceSource for SequenceSet {
    fn len(&self) -> usize {
        self.data.len()
    }
    fn seq_len(&self) -> usize {
        self.seq_len
    }
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }
    fn sequence(&self, i: usize) -> &[f64] {
        &self.data[i]
    }
    fn target(&self, i: usize) -> u8 {
        self.targets[i]
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    input: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNetwork {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `tanh` through the logistic identity `2 sigm(2x) - 1`; about twice as fast
/// as `f64::tanh` with absolute error near machine epsilon.
fn fast_tanh(x: f64) -> f64 {
    2.0 * sigmoid(2.0 * x) - 1.0
}

/// Binary cross-entropy of a logit, stable for large magnitudes.
pub fn bce_with_logit(logit: f64, target: u8) -> f64 {
    logit.max(0.0) - logit * f64::from(target) + (-logit.abs()).exp().ln_1p()
}

/// Per-layer activations of one batch, rows ordered `t * B + b`.
struct LayerCache {
    /// Layer input, `TB x in`.
    x: Array2<f64>,
    /// Gate activations, `TB x 4H`.
    act: Array2<f64>,
    /// Cell state after each step, `TB x H`.
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    /// Hidden state after each step (before dropout), `TB x H`.
    h: Array2<f64>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    /// Scaled dropout masks on the outputs of every layer except the top one.
    masks: Vec<Option<Array2<f64>>>,
    last_h: Array2<f64>,
    logits: Vec<f64>,
}

impl LstmNetwork {
    pub fn parameter_count(input_dim: usize, hidden: usize, layers: usize) -> usize {
        let mut n = 0;
        for l in 0..layers {
            let input = if l == 0 { input_dim } else { hidden };
            n += (input + hidden) * 4 * hidden + 4 * hidden;
        }
        n + hidden + 1
    }

    pub fn zeros(input_dim: usize, hidden: usize, layers: usize) -> Self {
        Self {
            input_dim,
            hidden,
            layers,
            params: vec![0.0; Self::parameter_count(input_dim, hidden, layers)],
        }
    }

    /// Uniform `(-1/sqrt(H), 1/sqrt(H))` initialisation with forget-gate
    /// biases set to 1.
    pub fn new(input_dim: usize, hidden: usize, layers: usize, seed: u64) -> Self {
        let mut net = Self::zeros(input_dim, hidden, layers);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1.0 / (hidden as f64).sqrt();
        for p in net.params.iter_mut() {
            *p = rng.random_range(-k..k);
        }
        for l in 0..layers {
            let lay = net.layout(l);
            for j in hidden..2 * hidden {
                net.params[lay.b + j] = 1.0;
            }
        }
        let out_b = net.params.len() - 1;
        net.params[out_b] = 0.0;
        net
    }

    pub fn from_params(
        input_dim: usize,
        hidden: usize,
        layers: usize,
        params: Vec<f64>,
    ) -> Result<Self, NetError> {
        let expected = Self::parameter_count(input_dim, hidden, layers);
        if params.len() != expected {
            return Err(NetError::Shape {
                expected: format!("{expected} parameters"),
                got: format!("{}", params.len()),
            });
        }
        Ok(Self {
            input_dim,
            hidden,
            layers,
            params,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layout(&self, l: usize) -> LayerLayout {
        let h = self.hidden;
        let mut off = 0;
        for k in 0..l {
            let input = if k == 0 { self.input_dim } else { h };
            off += (input + h) * 4 * h + 4 * h;
        }
        let input = if l == 0 { self.input_dim } else { h };
        LayerLayout {
            input,
            w: off,
            b: off + (input + h) * 4 * h,
        }
    }

    fn out_offset(&self) -> usize {
        self.params.len() - self.hidden - 1
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let lay = self.layout(l);
        let rows = lay.input + self.hidden;
        ArrayView2::from_shape((rows, 4 * self.hidden), &self.params[lay.w..lay.b])
            .expect("layout matches shape")
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let lay = self.layout(l);
        ArrayView1::from(&self.params[lay.b..lay.b + 4 * self.hidden])
    }

    /// Flags for parameters that receive the L1 penalty (weight matrices).
    fn weight_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.params.len()];
        for l in 0..self.layers {
            let lay = self.layout(l);
            mask[lay.w..lay.b].iter_mut().for_each(|m| *m = true);
        }
        let out = self.out_offset();
        mask[out..out + self.hidden].iter_mut().for_each(|m| *m = true);
        mask
    }

    fn check_sample(&self, sample: &[f64], seq_len: usize) -> Result<(), NetError> {
        if seq_len == 0 || sample.len() != seq_len * self.input_dim {
            return Err(NetError::Shape {
                expected: format!("{seq_len} x {}", self.input_dim),
                got: format!("{} values", sample.len()),
            });
        }
        Ok(())
    }

    /// Batch inputs as one `T*B x dim` matrix, rows ordered `t * B + b`.
    fn gather_inputs(samples: &[&[f64]], seq_len: usize, dim: usize) -> Array2<f64> {
        let b = samples.len();
        let mut x = Array2::zeros((seq_len * b, dim));
        let flat = x.as_slice_mut().expect("standard layout");
        for t in 0..seq_len {
            for (r, s) in samples.iter().enumerate() {
                let row = (t * b + r) * dim;
                flat[row..row + dim].copy_from_slice(&s[t * dim..(t + 1) * dim]);
            }
        }
        x
    }

    /// Runs layer `l` over a whole batch. The input projection of every step
    /// is one matrix product; only the recurrent term is computed per step.
    fn run_layer(&self, l: usize, x: Array2<f64>, batch: usize, keep: bool) -> (Array2<f64>, Option<LayerCache>) {
        let hd = self.hidden;
        let tb = x.nrows();
        let seq_len = tb / batch;
        let input = x.ncols();
        let w = self.weight(l);
        let (wx, wh) = (w.slice(s![..input, ..]), w.slice(s![input.., ..]));
        let mut z = Array2::zeros((tb, 4 * hd));
        for mut row in z.rows_mut() {
            row.assign(&self.bias(l));
        }
        general_mat_mul(1.0, &x, &wx, 1.0, &mut z);
        let mut h_out = Array2::<f64>::zeros((tb, hd));
        let mut c_out = Array2::<f64>::zeros((tb, hd));
        let mut tanh_c = Array2::<f64>::zeros((tb, hd));
        let mut h_prev = Array2::<f64>::zeros((batch, hd));
        for t in 0..seq_len {
            let rows = t * batch..(t + 1) * batch;
            if t > 0 {
                let mut zt = z.slice_mut(s![rows.clone(), ..]);
                general_mat_mul(1.0, &h_prev, &wh, 1.0, &mut zt);
            }
            let zs = z.as_slice_mut().expect("standard layout");
            let cs = c_out.as_slice_mut().expect("standard layout");
            let ts = tanh_c.as_slice_mut().expect("standard layout");
            let hs = h_out.as_slice_mut().expect("standard layout");
            for r in rows {
                let zr = &mut zs[r * 4 * hd..(r + 1) * 4 * hd];
                for j in 0..hd {
                    zr[j] = sigmoid(zr[j]);
                    zr[hd + j] = sigmoid(zr[hd + j]);
                    zr[2 * hd + j] = fast_tanh(zr[2 * hd + j]);
                    zr[3 * hd + j] = sigmoid(zr[3 * hd + j]);
                    let c_before = if t > 0 { cs[(r - batch) * hd + j] } else { 0.0 };
                    let c = zr[hd + j] * c_before + zr[j] * zr[2 * hd + j];
                    let tc = fast_tanh(c);
                    cs[r * hd + j] = c;
                    ts[r * hd + j] = tc;
                    hs[r * hd + j] = zr[3 * hd + j] * tc;
                }
            }
            h_prev.assign(&h_out.slice(s![t * batch..(t + 1) * batch, ..]));
        }
        let cache = keep.then(|| LayerCache {
            x,
            act: z,
            c: c_out,
            tanh_c,
            h: h_out.clone(),
        });
        (h_out, cache)
    }

    fn forward_cached(
        &self,
        samples: &[&[f64]],
        seq_len: usize,
        masks: Vec<Option<Array2<f64>>>,
    ) -> ForwardCache {
        let b = samples.len();
        let mut input = Self::gather_inputs(samples, seq_len, self.input_dim);
        let mut layers = Vec::with_capacity(self.layers);
        for (l, mask) in masks.iter().enumerate() {
            let (h, cache) = self.run_layer(l, input, b, true);
            layers.push(cache.expect("cache requested"));
            input = match mask {
                Some(m) => h * m,
                None => h,
            };
        }
        let last_h = input.slice(s![(seq_len - 1) * b.., ..]).to_owned();
        let logits = self.project(&last_h);
        ForwardCache {
            layers,
            masks,
            last_h,
            logits,
        }
    }

    fn project(&self, last_h: &Array2<f64>) -> Vec<f64> {
        let out = self.out_offset();
        let w_out = ArrayView1::from(&self.params[out..out + self.hidden]);
        let b_out = self.params[out + self.hidden];
        last_h.dot(&w_out).iter().map(|z| z + b_out).collect()
    }

    /// Gradient of the mean BCE over the batch with respect to every parameter.
    fn backward(&self, cache: &ForwardCache, targets: &[u8], grad: &mut [f64]) {
        let hd = self.hidden;
        let b = targets.len();
        let out = self.out_offset();
        let inv_b = 1.0 / b as f64;
        let dlogit: Vec<f64> = cache
            .logits
            .iter()
            .zip(targets)
            .map(|(&z, &y)| (sigmoid(z) - f64::from(y)) * inv_b)
            .collect();
        for (r, &dl) in dlogit.iter().enumerate() {
            for j in 0..hd {
                grad[out + j] += cache.last_h[[r, j]] * dl;
            }
            grad[out + hd] += dl;
        }
        let tb = cache.layers[0].x.nrows();
        let seq_len = tb / b;
        let mut d_out = Array2::<f64>::zeros((tb, hd));
        for (r, &dl) in dlogit.iter().enumerate() {
            for j in 0..hd {
                d_out[[(seq_len - 1) * b + r, j]] = dl * self.params[out + j];
            }
        }
        for l in (0..self.layers).rev() {
            let lay = self.layout(l);
            let lc = &cache.layers[l];
            let w = self.weight(l);
            let (wx, wh) = (w.slice(s![..lay.input, ..]), w.slice(s![lay.input.., ..]));
            let mut dz = Array2::<f64>::zeros((tb, 4 * hd));
            let mut dh_next = Array2::<f64>::zeros((b, hd));
            let mut dc_next = vec![0.0; b * hd];
            let act = lc.act.as_slice().expect("standard layout");
            let cs = lc.c.as_slice().expect("standard layout");
            let tcs = lc.tanh_c.as_slice().expect("standard layout");
            let dout = d_out.as_slice().expect("standard layout");
            for t in (0..seq_len).rev() {
                {
                    let dzs = dz.as_slice_mut().expect("standard layout");
                    let dhn = dh_next.as_slice().expect("standard layout");
                    for r in 0..b {
                        let row = t * b + r;
                        let a = &act[row * 4 * hd..(row + 1) * 4 * hd];
                        let dzr = &mut dzs[row * 4 * hd..(row + 1) * 4 * hd];
                        for j in 0..hd {
                            let (i, f, g, o) = (a[j], a[hd + j], a[2 * hd + j], a[3 * hd + j]);
                            let tc = tcs[row * hd + j];
                            let c_before = if t > 0 { cs[(row - b) * hd + j] } else { 0.0 };
                            let dh = dout[row * hd + j] + dhn[r * hd + j];
                            let dc = dh * o * (1.0 - tc * tc) + dc_next[r * hd + j];
                            dzr[j] = dc * g * i * (1.0 - i);
                            dzr[hd + j] = dc * c_before * f * (1.0 - f);
                            dzr[2 * hd + j] = dc * i * (1.0 - g * g);
                            dzr[3 * hd + j] = dh * tc * o * (1.0 - o);
                            dc_next[r * hd + j] = dc * f;
                        }
                    }
                }
                if t > 0 {
                    let dzt = dz.slice(s![t * b..(t + 1) * b, ..]);
                    general_mat_mul(1.0, &dzt, &wh.t(), 0.0, &mut dh_next);
                }
            }
            {
                let mut gw = ArrayViewMut2::from_shape((lay.input + hd, 4 * hd), &mut grad[lay.w..lay.b])
                    .expect("layout matches shape");
                general_mat_mul(1.0, &lc.x.t(), &dz, 1.0, &mut gw.slice_mut(s![..lay.input, ..]));
                if seq_len > 1 {
                    let h_before = lc.h.slice(s![..(seq_len - 1) * b, ..]);
                    let dz_after = dz.slice(s![b.., ..]);
                    general_mat_mul(1.0, &h_before.t(), &dz_after, 1.0, &mut gw.slice_mut(s![lay.input.., ..]));
                }
            }
            for (k, v) in dz.sum_axis(Axis(0)).iter().enumerate() {
                grad[lay.b + k] += v;
            }
            if l > 0 {
                let mut dx = dz.dot(&wx.t());
                if let Some(m) = &cache.masks[l - 1] {
                    dx *= m;
                }
                d_out = dx;
            }
        }
    }

    fn batch_loss_and_grad(
        &self,
        samples: &[&[f64]],
        targets: &[u8],
        seq_len: usize,
        masks: Vec<Option<Array2<f64>>>,
        l1: f64,
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let cache = self.forward_cached(samples, seq_len, masks);
        let mut grad = vec![0.0; self.params.len()];
        self.backward(&cache, targets, &mut grad);
        let mut loss = cache
            .logits
            .iter()
            .zip(targets)
            .map(|(&z, &y)| bce_with_logit(z, y))
            .sum::<f64>()
            / targets.len() as f64;
        if l1 > 0.0 {
            for ((g, p), is_w) in grad.iter_mut().zip(&self.params).zip(self.weight_mask()) {
                if is_w {
                    loss += l1 * p.abs();
                    *g += l1 * p.signum() * f64::from(u8::from(*p != 0.0));
                }
            }
        }
        (loss, grad, cache.logits)
    }

    /// Loss (mean BCE plus L1 term) and its gradient for a batch, dropout off.
    pub fn loss_and_gradient(
        &self,
        samples: &[&[f64]],
        targets: &[u8],
        seq_len: usize,
        l1: f64,
    ) -> Result<(f64, Vec<f64>), NetError> {
        for s in samples {
            self.check_sample(s, seq_len)?;
        }
        let masks = vec![None; self.layers];
        let (loss, grad, _) = self.batch_loss_and_grad(samples, targets, seq_len, masks, l1);
        Ok((loss, grad))
    }

    pub fn loss(&self, samples: &[&[f64]], targets: &[u8], seq_len: usize, l1: f64) -> Result<f64, NetError> {
        let logits = self.logits(samples, seq_len)?;
        let mut loss = logits
            .iter()
            .zip(targets)
            .map(|(&z, &y)| bce_with_logit(z, y))
            .sum::<f64>()
            / targets.len() as f64;
        if l1 > 0.0 {
            for (p, is_w) in self.params.iter().zip(self.weight_mask()) {
                if is_w {
                    loss += l1 * p.abs();
                }
            }
        }
        Ok(loss)
    }

    /// Logits without dropout.
    pub fn logits(&self, samples: &[&[f64]], seq_len: usize) -> Result<Vec<f64>, NetError> {
        for s in samples {
            self.check_sample(s, seq_len)?;
        }
        let b = samples.len();
        let mut input = Self::gather_inputs(samples, seq_len, self.input_dim);
        for l in 0..self.layers {
            input = self.run_layer(l, input, b, false).0;
        }
        Ok(self.project(&input.slice(s![(seq_len - 1) * b.., ..]).to_owned()))
    }

    /// Probability of class 1 for one `seq_len x input_dim` sample.
    pub fn forward(&self, sample: &[f64], seq_len: usize) -> Result<f64, NetError> {
        Ok(probability(self.logits(&[sample], seq_len)?[0]))
    }

    pub fn save(&self, path: &Path, config: &LstmConfig) -> Result<(), NetError> {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            network: self.clone(),
        };
        let text = serde_json::to_string(&ck).map_err(|e| NetError::Format(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, LstmConfig), NetError> {
        let text = fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| NetError::Format(e.to_string()))?;
        ck.validate()?;
        Ok((ck.network, ck.config))
    }
}

/// Sigmoid kept strictly inside `(0, 1)`.
pub fn probability(logit: f64) -> f64 {
    sigmoid(logit).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Versioned network checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: LstmConfig,
    pub network: LstmNetwork,
}

impl Checkpoint {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(NetError::Format(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let n = &self.network;
        let expected = LstmNetwork::parameter_count(n.input_dim, n.hidden, n.layers);
        if n.params.len() != expected {
            return Err(NetError::Format(format!(
                "expected {expected} parameters, found {}",
                n.params.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch (dropout active).
    pub loss: f64,
    /// Fraction of training samples classified correctly during the epoch.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    pub final_params: Vec<f64>,
}

fn dropout_masks(
    rng: &mut ChaCha8Rng,
    layers: usize,
    rows: usize,
    hidden: usize,
    rate: f64,
) -> Vec<Option<Array2<f64>>> {
    (0..layers)
        .map(|l| {
            if rate == 0.0 || l + 1 == layers {
                return None;
            }
            let keep = 1.0 / (1.0 - rate);
            Some(Array2::from_shape_fn((rows, hidden), |_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            }))
        })
        .collect()
}

/// Mini-batch SGD with momentum on mean binary cross-entropy. Shuffling and
/// dropout masks draw from one RNG seeded with `cfg.seed`, so a run is fully
/// determined by the network, the data and the config.
pub fn train<S: SequenceSource + ?Sized>(
    net: &mut LstmNetwork,
    data: &S,
    cfg: &LstmConfig,
) -> Result<TrainReport, NetError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NetError::Empty);
    }
    if data.feature_dim() != net.input_dim {
        return Err(NetError::Shape {
            expected: format!("feature_dim {}", net.input_dim),
            got: format!("{}", data.feature_dim()),
        });
    }
    let seq_len = data.seq_len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut velocity = vec![0.0; net.params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let samples: Vec<&[f64]> = batch.iter().map(|&i| data.sequence(i)).collect();
            let targets: Vec<u8> = batch.iter().map(|&i| data.target(i)).collect();
            let masks = dropout_masks(&mut rng, net.layers, seq_len * batch.len(), net.hidden, cfg.dropout);
            let (loss, grad, logits) =
                net.batch_loss_and_grad(&samples, &targets, seq_len, masks, cfg.l1_penalty);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NetError::Diverged { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            correct += logits
                .iter()
                .zip(&targets)
                .filter(|(&z, &y)| u8::from(z >= 0.0) == y)
                .count();
            for ((p, v), g) in net.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *p -= cfg.learning_rate * *v;
            }
        }
        epochs.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok(TrainReport {
        seed: cfg.seed,
        epochs,
        final_params: net.params.clone(),
    })
}

/// Probabilities for every sample, in order, computed in chunks.
pub fn predict_series<S: SequenceSource + ?Sized>(
    net: &LstmNetwork,
    data: &S,
) -> Result<Vec<f64>, NetError> {
    if data.len() > 0 && data.feature_dim() != net.input_dim {
        return Err(NetError::Shape {
            expected: format!("feature_dim {}", net.input_dim),
            got: format!("{}", data.feature_dim()),
        });
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(256) {
        let samples: Vec<&[f64]> = chunk.iter().map(|&i| data.sequence(i)).collect();
        out.extend(net.logits(&samples, data.seq_len())?.into_iter().map(probability));
    }
    Ok(out)
}

/// Mean loss and accuracy at threshold 0.5, dropout off.
pub fn evaluate<S: SequenceSource + ?Sized>(net: &LstmNetwork, data: &S) -> Result<(f64, f64), NetError> {
    if data.is_empty() {
        return Err(NetError::Empty);
    }
    let probs = predict_series(net, data)?;
    let mut loss = 0.0;
    let mut correct = 0;
    for (i, p) in probs.iter().enumerate() {
        let y = data.target(i);
        loss -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
        correct += usize::from(u8::from(*p >= 0.5) == y);
    }
    Ok((loss / probs.len() as f64, correct as f64 / probs.len() as f64))
}

/// Relative error `|a - n| / max(|a| + |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

pub const GRADIENT_CHECK_STEP: f64 = 1e-5;
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative error between backpropagated gradients and central
/// differences (step `1e-5`) over every parameter, for one sample.
pub fn gradient_check(
    net: &LstmNetwork,
    sample: &[f64],
    seq_len: usize,
    label: u8,
) -> Result<f64, NetError> {
    let (_, analytic) = net.loss_and_gradient(&[sample], &[label], seq_len, 0.0)?;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (k, &a) in analytic.iter().enumerate() {
        let orig = probe.params[k];
        probe.params[k] = orig + GRADIENT_CHECK_STEP;
        let up = probe.loss(&[sample], &[label], seq_len, 0.0)?;
        probe.params[k] = orig - GRADIENT_CHECK_STEP;
        let down = probe.loss(&[sample], &[label], seq_len, 0.0)?;
        probe.params[k] = orig;
        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_STEP);
        worst = worst.max(relative_error(a, numeric, GRADIENT_CHECK_FLOOR));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn random_sample(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn zero_network_gives_half() {
        let net = LstmNetwork::zeros(3, 4, 2);
        let p = net.forward(&random_sample(1, 15), 5).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn probability_is_open_interval() {
        assert!(probability(1e3) < 1.0);
        assert!(probability(-1e3) > 0.0);
        let net = LstmNetwork::new(3, 4, 1, 3);
        let big: Vec<f64> = random_sample(2, 15).iter().map(|x| x * 1e6).collect();
        let p = net.forward(&big, 5).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn forward_is_deterministic() {
        let a = LstmNetwork::new(3, 6, 2, 42);
        let b = LstmNetwork::new(3, 6, 2, 42);
        let x = random_sample(5, 30);
        assert_eq!(a.forward(&x, 10).unwrap().to_bits(), b.forward(&x, 10).unwrap().to_bits());
    }

    #[test]
    fn shape_mismatch() {
        let net = LstmNetwork::new(3, 4, 1, 0);
        assert!(matches!(net.forward(&[0.0; 10], 5), Err(NetError::Shape { .. })));
    }

    #[test]
    fn gradient_check_small_nets() {
        for (seed, layers, hidden) in [(1, 1, 3), (2, 2, 4), (3, 2, 8)] {
            let net = LstmNetwork::new(3, hidden, layers, seed);
            let x = random_sample(seed + 100, 18);
            let err = gradient_check(&net, &x, 6, (seed % 2) as u8).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zero_input_column_has_zero_gradient() {
        let net = LstmNetwork::new(3, 4, 1, 9);
        let mut x = random_sample(9, 15);
        for t in 0..5 {
            x[t * 3 + 1] = 0.0;
        }
        let (_, g) = net.loss_and_gradient(&[&x], &[1], 5, 0.0).unwrap();
        // row 1 of the first weight matrix multiplies the zero feature
        let cols = 4 * 4;
        assert!(g[cols..2 * cols].iter().all(|&v| v == 0.0));
        assert!(g[..cols].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn dead_gate_relative_error_is_finite() {
        assert_eq!(relative_error(0.0, 0.0, GRADIENT_CHECK_FLOOR), 0.0);
        assert!(relative_error(0.0, 1e-12, GRADIENT_CHECK_FLOOR) < 1e-5);
    }

    #[test]
    fn l1_gradient_matches_finite_difference() {
        let net = LstmNetwork::new(2, 3, 2, 4);
        let x = random_sample(4, 8);
        let (_, g) = net.loss_and_gradient(&[&x], &[0], 4, 0.01).unwrap();
        let mut probe = net.clone();
        for k in [0, 7, 30, probe.params.len() - 2] {
            let orig = probe.params[k];
            probe.params[k] = orig + 1e-6;
            let up = probe.loss(&[&x], &[0], 4, 0.01).unwrap();
            probe.params[k] = orig - 1e-6;
            let down = probe.loss(&[&x], &[0], 4, 0.01).unwrap();
            probe.params[k] = orig;
            let num = (up - down) / 2e-6;
            assert!(relative_error(g[k], num, 1e-6) < 1e-4);
        }
    }

    fn toy_set(n: usize) -> SequenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut data = Vec::new();
        let mut targets = Vec::new();
        for i in 0..n {
            let y = (i % 2) as u8;
            let sign = if y == 1 { 1.0 } else { -1.0 };
            let seq: Vec<f64> = (0..10)
                .map(|_| 0.5 * sign + 0.3 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            data.push(seq);
            targets.push(y);
        }
        SequenceSet {
            seq_len: 5,
            feature_dim: 2,
            data,
            targets,
        }
    }

    #[test]
    fn zero_epochs_leave_parameters() {
        let mut net = LstmNetwork::new(2, 4, 1, 1);
        let before = net.clone();
        let cfg = LstmConfig {
            epochs: 0,
            layers: 1,
            hidden_size: 4,
            back_days: 5,
            ..Default::default()
        };
        let report = train(&mut net, &toy_set(20), &cfg).unwrap();
        assert!(report.epochs.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn training_is_reproducible_and_learns() {
        let cfg = LstmConfig {
            layers: 2,
            hidden_size: 6,
            back_days: 5,
            epochs: 30,
            learning_rate: 0.05,
            batch_size: 8,
            seed: 5,
            ..Default::default()
        };
        let data = toy_set(64);
        let mut a = LstmNetwork::new(2, 6, 2, 5);
        let mut b = a.clone();
        let ra = train(&mut a, &data, &cfg).unwrap();
        let rb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert!(ra.epochs.last().unwrap().loss < ra.epochs[0].loss);
        assert!(ra.epochs.iter().all(|e| e.loss.is_finite()));
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = LstmConfig {
            layers: 1,
            hidden_size: 4,
            back_days: 5,
            epochs: 3,
            seed: 1,
            ..Default::default()
        };
        // non-finite inputs poison the pre-activations
        let mut data = toy_set(16);
        data.data.iter_mut().flatten().for_each(|v| *v = f64::INFINITY);
        let mut net = LstmNetwork::new(2, 4, 1, 1);
        assert!(matches!(
            train(&mut net, &data, &cfg),
            Err(NetError::Diverged { .. })
        ));
    }

    #[test]
    fn predictions_align_and_checkpoint_round_trips() {
        let data = toy_set(30);
        let net = LstmNetwork::new(2, 5, 2, 8);
        let p = predict_series(&net, &data).unwrap();
        assert_eq!(p.len(), 30);
        assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save(&path, &LstmConfig::default()).unwrap();
        let (back, _) = LstmNetwork::load(&path).unwrap();
        let q = predict_series(&back, &data).unwrap();
        assert!(p.iter().zip(&q).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn config_validation() {
        assert!(LstmConfig::default().validate().is_ok());
        let bad = LstmConfig {
            dropout: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
