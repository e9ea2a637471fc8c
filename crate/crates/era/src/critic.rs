//! Adversarial critic over reconstructed frame sequences.
//!
//! The default critic aggregates the sequence into patches with a stack of
//! strided one-dimensional convolutions (each block cuts the length to a
//! fifth), then scores every patch with an unbounded linear head. A recurrent
//! critic with last-hidden-state aggregation stands in when patch aggregation
//! is disabled.
//!
//! The Wasserstein gradient penalty needs gradients of an input-gradient
//! norm with respect to the critic parameters. Every nonlinearity here is
//! piecewise linear, so the backward pass is itself a linear map with
//! activation masks that are constant almost everywhere; replaying that map
//! with a tangent vector yields exact second-order gradients without a tape.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EraError, Result};
use crate::nn::{relu, relu_mask, Param, ParamSet};

/// Every building block reduces the sequence length by this factor.
pub const PATCH_STRIDE: usize = 5;

/// Which data term the critic loss uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `|mean(c(x)) - mean(c(x'))| + gp`. Non-negative but unoriented.
    Paper,
    /// `mean(c(x')) - mean(c(x)) + gp`, the conventional Wasserstein-GP
    /// objective and the training default.
    Standard,
}

/// Hyper-parameters of the patch critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchConfig {
    /// Feature size per frame; equals the scene feature dimension.
    pub k: usize,
    /// Number of building blocks. Zero means the head scores raw frames.
    pub m: usize,
    /// First convolution's kernel width. Must not exceed the stride so the
    /// receptive field of one output patch is exactly `5^m` frames.
    pub kernel: usize,
    /// Fixed at 5.
    pub stride: usize,
    /// Gradient penalty weight.
    pub lambda_gp: f64,
    pub loss_mode: LossMode,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            k: 1024,
            m: 2,
            kernel: 5,
            stride: PATCH_STRIDE,
            lambda_gp: 10.0,
            loss_mode: LossMode::Standard,
        }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.k == 0 {
            problems.push("critic.k: must be positive".to_string());
        }
        if self.stride != PATCH_STRIDE {
            problems.push(format!("critic.stride: must be {PATCH_STRIDE}, got {}", self.stride));
        }
        if self.kernel == 0 || self.kernel > self.stride {
            problems.push(format!(
                "critic.kernel: must be in 1..={}, got {}",
                self.stride, self.kernel
            ));
        }
        if !(self.lambda_gp > 0.0 && self.lambda_gp.is_finite()) {
            problems.push(format!("critic.lambda_gp: must be positive, got {}", self.lambda_gp));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(EraError::Config(problems))
        }
    }
}

/// One building block: strided conv K -> 2K with ReLU, then a pointwise
/// 1x1 conv 2K -> K with ReLU. Weights are stored as the equivalent matmul
/// on windowed rows.
#[derive(Debug, Clone)]
pub struct PatchBlock {
    pub w1: Param, // (kernel*K) x 2K
    pub b1: Param, // 1 x 2K
    pub w2: Param, // 2K x K
    pub b2: Param, // 1 x K
}

#[derive(Debug, Clone)]
pub struct PatchCritic {
    pub config: PatchConfig,
    pub blocks: Vec<PatchBlock>,
    pub head_w: Param, // K x 1
    pub head_b: Param, // 1 x 1
}

/// Per-block forward cache. Pre-activations are kept so the backward pass and
/// the penalty replay can rebuild the ReLU masks.
#[derive(Debug, Clone)]
pub struct PatchBlockCache {
    in_len: usize,
    xw: Array2<f64>,  // P x kernel*K windowed input
    z: Array2<f64>,   // P x 2K pre-activation of the strided conv
    a: Array2<f64>,   // P x 2K
    y: Array2<f64>,   // P x K pre-activation of the pointwise conv
}

#[derive(Debug, Clone)]
pub struct PatchForward {
    pub blocks: Vec<PatchBlockCache>,
    pub h_m: Array2<f64>,
    pub scores: Array1<f64>,
}

/// Intermediate gradients of an input-gradient pass, saved so the penalty
/// replay can revisit the same linearization.
struct PatchReplay {
    d_z: Vec<Array2<f64>>,
    d_y: Vec<Array2<f64>>,
}

/// Slice `x` into non-overlapping windows of `stride` rows (zero right-padded
/// to a multiple of the stride) and flatten the first `kernel` rows of each.
fn window(x: &Array2<f64>, kernel: usize, stride: usize) -> Array2<f64> {
    let (t, k) = x.dim();
    let p = t.div_ceil(stride).max(1);
    let mut out = Array2::zeros((p, kernel * k));
    for pi in 0..p {
        for u in 0..kernel {
            let row = pi * stride + u;
            if row >= t {
                continue;
            }
            for c in 0..k {
                out[[pi, u * k + c]] = x[[row, c]];
            }
        }
    }
    out
}

/// Adjoint of [`window`]: scatter flattened window gradients back onto rows,
/// dropping the padding region.
fn unwindow(dxw: &Array2<f64>, t: usize, k: usize, kernel: usize, stride: usize) -> Array2<f64> {
    let mut dx = Array2::zeros((t, k));
    for (pi, row) in dxw.outer_iter().enumerate() {
        for u in 0..kernel {
            let r = pi * stride + u;
            if r >= t {
                continue;
            }
            for c in 0..k {
                dx[[r, c]] += row[u * k + c];
            }
        }
    }
    dx
}

fn sum_rows(x: &Array2<f64>) -> Array2<f64> {
    x.sum_axis(Axis(0)).insert_axis(Axis(0))
}

impl PatchCritic {
    pub fn new(config: PatchConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let k = config.k;
        let blocks = (0..config.m)
            .map(|_| PatchBlock {
                w1: Param::glorot(config.kernel * k, 2 * k, rng),
                b1: Param::zeros(1, 2 * k),
                w2: Param::glorot(2 * k, k, rng),
                b2: Param::zeros(1, k),
            })
            .collect();
        Ok(PatchCritic {
            blocks,
            head_w: Param::glorot(k, 1, rng),
            head_b: Param::zeros(1, 1),
            config,
        })
    }

    /// Run the block stack. Output has `ceil(T / 5^m)` rows.
    pub fn patch_forward(&self, x: &Array2<f64>) -> Result<PatchForward> {
        if x.nrows() == 0 {
            return Err(EraError::InvalidArgument(
                "critic input must have at least one frame".to_string(),
            ));
        }
        if x.ncols() != self.config.k {
            return Err(EraError::ShapeMismatch(format!(
                "critic expects {} features per frame, got {}",
                self.config.k,
                x.ncols()
            )));
        }
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let xw = window(&cur, self.config.kernel, self.config.stride);
            let z = xw.dot(&block.w1.value) + &block.b1.value;
            let a = relu(&z);
            let y = a.dot(&block.w2.value) + &block.b2.value;
            let out = relu(&y);
            caches.push(PatchBlockCache {
                in_len: cur.nrows(),
                xw,
                z,
                a,
                y,
            });
            cur = out;
        }
        let scores = self.critic_scores(&cur);
        Ok(PatchForward {
            blocks: caches,
            h_m: cur,
            scores,
        })
    }

    /// Pointwise linear head, one unbounded score per patch.
    pub fn critic_scores(&self, h_m: &Array2<f64>) -> Array1<f64> {
        let col = h_m.dot(&self.head_w.value);
        col.column(0).mapv(|v| v + self.head_b.value[[0, 0]])
    }

    /// Accumulate parameter gradients of `sum_i d_scores[i] * scores[i]`.
    pub fn backward_scores(&mut self, fwd: &PatchForward, d_scores: &Array1<f64>) {
        let d_col = d_scores.clone().insert_axis(Axis(1));
        self.head_w.grad += &fwd.h_m.t().dot(&d_col);
        self.head_b.grad[[0, 0]] += d_scores.sum();
        let mut d_out = d_col.dot(&self.head_w.value.t());
        for (block, cache) in self.blocks.iter_mut().zip(fwd.blocks.iter()).rev() {
            let dy = &d_out * &relu_mask(&cache.y);
            block.w2.grad += &cache.a.t().dot(&dy);
            block.b2.grad += &sum_rows(&dy);
            let da = dy.dot(&block.w2.value.t());
            let dz = &da * &relu_mask(&cache.z);
            block.w1.grad += &cache.xw.t().dot(&dz);
            block.b1.grad += &sum_rows(&dz);
            let dxw = dz.dot(&block.w1.value.t());
            d_out = unwindow(&dxw, cache.in_len, self.config.k, self.config.kernel, self.config.stride);
        }
        // d_out now holds the input gradient; callers wanting it use input_grad.
    }

    fn input_grad_cached(&self, fwd: &PatchForward, d_scores: &Array1<f64>) -> (Array2<f64>, PatchReplay) {
        let d_col = d_scores.clone().insert_axis(Axis(1));
        let mut d_out = d_col.dot(&self.head_w.value.t());
        let mut d_z = vec![Array2::zeros((0, 0)); self.blocks.len()];
        let mut d_y = vec![Array2::zeros((0, 0)); self.blocks.len()];
        for (bi, (block, cache)) in self.blocks.iter().zip(fwd.blocks.iter()).enumerate().rev() {
            let dy = &d_out * &relu_mask(&cache.y);
            let da = dy.dot(&block.w2.value.t());
            let dz = &da * &relu_mask(&cache.z);
            let dxw = dz.dot(&block.w1.value.t());
            d_out = unwindow(&dxw, cache.in_len, self.config.k, self.config.kernel, self.config.stride);
            d_z[bi] = dz;
            d_y[bi] = dy;
        }
        (d_out, PatchReplay { d_z, d_y })
    }

    /// Gradient of `sum_i d_scores[i] * scores[i]` with respect to the input.
    pub fn input_grad(&self, fwd: &PatchForward, d_scores: &Array1<f64>) -> Array2<f64> {
        self.input_grad_cached(fwd, d_scores).0
    }

    /// Forward-over-reverse replay: accumulate `d <u, g> / d params` where
    /// `g` is the input gradient the saved replay produced. ReLU masks are
    /// treated as constants, exact almost everywhere.
    fn penalty_replay(
        &mut self,
        fwd: &PatchForward,
        replay: &PatchReplay,
        u: &Array2<f64>,
        d_scores: &Array1<f64>,
    ) {
        let mut u_cur = u.clone();
        for (bi, cache) in fwd.blocks.iter().enumerate() {
            let block = &mut self.blocks[bi];
            let u_xw = window(&u_cur, self.config.kernel, self.config.stride);
            block.w1.grad += &u_xw.t().dot(&replay.d_z[bi]);
            let u_dz = u_xw.dot(&block.w1.value);
            let u_da = &u_dz * &relu_mask(&cache.z);
            block.w2.grad += &u_da.t().dot(&replay.d_y[bi]);
            let u_dy = u_da.dot(&block.w2.value);
            u_cur = &u_dy * &relu_mask(&cache.y);
        }
        let d_col = d_scores.clone().insert_axis(Axis(1));
        self.head_w.grad += &u_cur.t().dot(&d_col);
        // Biases and the head offset never enter the input gradient.
    }
}

impl ParamSet for PatchCritic {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        for (i, b) in self.blocks.iter().enumerate() {
            f(&format!("critic.block{i}.w1"), &b.w1);
            f(&format!("critic.block{i}.b1"), &b.b1);
            f(&format!("critic.block{i}.w2"), &b.w2);
            f(&format!("critic.block{i}.b2"), &b.b2);
        }
        f("critic.head.w", &self.head_w);
        f("critic.head.b", &self.head_b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            f(&format!("critic.block{i}.w1"), &mut b.w1);
            f(&format!("critic.block{i}.b1"), &mut b.b1);
            f(&format!("critic.block{i}.w2"), &mut b.w2);
            f(&format!("critic.block{i}.b2"), &mut b.b2);
        }
        f("critic.head.w", &mut self.head_w);
        f("critic.head.b", &mut self.head_b);
    }
}

/// Recurrent critic: single-layer ReLU RNN, score from the last hidden state.
/// ReLU (rather than tanh) keeps the network piecewise linear so the penalty
/// replay stays exact.
#[derive(Debug, Clone)]
pub struct RecurrentCritic {
    pub k: usize,
    pub hidden: usize,
    pub lambda_gp: f64,
    pub loss_mode: LossMode,
    pub wx: Param,     // K x H
    pub wh: Param,     // H x H
    pub b: Param,      // 1 x H
    pub head_w: Param, // H x 1
    pub head_b: Param, // 1 x 1
}

#[derive(Debug, Clone)]
pub struct RecurrentForward {
    pre: Array2<f64>, // T x H pre-activations
    hs: Array2<f64>,  // T x H hidden states
    xs: Array2<f64>,  // T x K
    pub scores: Array1<f64>, // length 1
}

struct RecurrentReplay {
    da: Array2<f64>, // T x H masked hidden gradients
}

impl RecurrentCritic {
    pub fn new(k: usize, hidden: usize, lambda_gp: f64, loss_mode: LossMode, rng: &mut ChaCha8Rng) -> Result<Self> {
        if k == 0 || hidden == 0 {
            return Err(EraError::InvalidArgument(
                "recurrent critic dimensions must be positive".to_string(),
            ));
        }
        if !(lambda_gp > 0.0 && lambda_gp.is_finite()) {
            return Err(EraError::InvalidArgument(format!(
                "lambda_gp must be positive, got {lambda_gp}"
            )));
        }
        Ok(RecurrentCritic {
            k,
            hidden,
            lambda_gp,
            loss_mode,
            wx: Param::glorot(k, hidden, rng),
            wh: Param::glorot(hidden, hidden, rng),
            b: Param::zeros(1, hidden),
            head_w: Param::glorot(hidden, 1, rng),
            head_b: Param::zeros(1, 1),
        })
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<RecurrentForward> {
        let (t, k) = x.dim();
        if t == 0 {
            return Err(EraError::InvalidArgument(
                "critic input must have at least one frame".to_string(),
            ));
        }
        if k != self.k {
            return Err(EraError::ShapeMismatch(format!(
                "critic expects {} features per frame, got {k}",
                self.k
            )));
        }
        let mut pre = Array2::zeros((t, self.hidden));
        let mut hs = Array2::zeros((t, self.hidden));
        let mut h_prev = Array2::zeros((1, self.hidden));
        for ti in 0..t {
            let x_t = x.row(ti).insert_axis(Axis(0));
            let p = x_t.dot(&self.wx.value) + h_prev.dot(&self.wh.value) + &self.b.value;
            let h = relu(&p);
            pre.row_mut(ti).assign(&p.row(0));
            hs.row_mut(ti).assign(&h.row(0));
            h_prev = h;
        }
        let score = h_prev.dot(&self.head_w.value)[[0, 0]] + self.head_b.value[[0, 0]];
        Ok(RecurrentForward {
            pre,
            hs,
            xs: x.clone(),
            scores: Array1::from(vec![score]),
        })
    }

    pub fn backward_scores(&mut self, fwd: &RecurrentForward, d_scores: &Array1<f64>) {
        let coeff = d_scores[0];
        let t = fwd.hs.nrows();
        let h_last = fwd.hs.row(t - 1).insert_axis(Axis(0));
        self.head_w.grad += &(h_last.t().to_owned() * coeff);
        self.head_b.grad[[0, 0]] += coeff;
        let mut dh = self.head_w.value.t().to_owned() * coeff; // 1 x H
        for ti in (0..t).rev() {
            let mask = fwd.pre.row(ti).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let da = (&dh.row(0).to_owned() * &mask).insert_axis(Axis(0));
            let x_t = fwd.xs.row(ti).insert_axis(Axis(0));
            self.wx.grad += &x_t.t().dot(&da);
            if ti > 0 {
                let h_prev = fwd.hs.row(ti - 1).insert_axis(Axis(0));
                self.wh.grad += &h_prev.t().dot(&da);
            }
            self.b.grad += &da;
            dh = da.dot(&self.wh.value.t());
        }
    }

    fn input_grad_cached(&self, fwd: &RecurrentForward, d_scores: &Array1<f64>) -> (Array2<f64>, RecurrentReplay) {
        let coeff = d_scores[0];
        let t = fwd.hs.nrows();
        let mut dx = Array2::zeros((t, self.k));
        let mut da_all = Array2::zeros((t, self.hidden));
        let mut dh = self.head_w.value.t().to_owned() * coeff;
        for ti in (0..t).rev() {
            let mask = fwd.pre.row(ti).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            let da = (&dh.row(0).to_owned() * &mask).insert_axis(Axis(0));
            dx.row_mut(ti).assign(&da.dot(&self.wx.value.t()).row(0));
            da_all.row_mut(ti).assign(&da.row(0));
            dh = da.dot(&self.wh.value.t());
        }
        (dx, RecurrentReplay { da: da_all })
    }

    pub fn input_grad(&self, fwd: &RecurrentForward, d_scores: &Array1<f64>) -> Array2<f64> {
        self.input_grad_cached(fwd, d_scores).0
    }

    /// Accumulate `d <u, g> / d params` by running the tangent recurrence
    /// forward in time: `q_t = u_t Wx + r_{t-1} Wh`, `r_t = q_t . mask_t`.
    fn penalty_replay(
        &mut self,
        fwd: &RecurrentForward,
        replay: &RecurrentReplay,
        u: &Array2<f64>,
        d_scores: &Array1<f64>,
    ) {
        let t = fwd.hs.nrows();
        let mut r_prev = Array2::zeros((1, self.hidden));
        for ti in 0..t {
            let u_t = u.row(ti).insert_axis(Axis(0));
            let da_t = replay.da.row(ti).insert_axis(Axis(0));
            self.wx.grad += &u_t.t().dot(&da_t);
            if ti > 0 {
                self.wh.grad += &r_prev.t().dot(&da_t);
            }
            let q = u_t.dot(&self.wx.value) + r_prev.dot(&self.wh.value);
            let mask = fwd.pre.row(ti).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            r_prev = (&q.row(0).to_owned() * &mask).insert_axis(Axis(0));
        }
        self.head_w.grad += &(r_prev.t().to_owned() * d_scores[0]);
    }
}

impl ParamSet for RecurrentCritic {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        f("critic.rnn.wx", &self.wx);
        f("critic.rnn.wh", &self.wh);
        f("critic.rnn.b", &self.b);
        f("critic.head.w", &self.head_w);
        f("critic.head.b", &self.head_b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        f("critic.rnn.wx", &mut self.wx);
        f("critic.rnn.wh", &mut self.wh);
        f("critic.rnn.b", &mut self.b);
        f("critic.head.w", &mut self.head_w);
        f("critic.head.b", &mut self.head_b);
    }
}

/// Either critic behind one interface.
#[derive(Debug, Clone)]
pub enum Critic {
    Patch(PatchCritic),
    Recurrent(RecurrentCritic),
}

pub enum CriticForward {
    Patch(PatchForward),
    Recurrent(RecurrentForward),
}

impl CriticForward {
    pub fn scores(&self) -> &Array1<f64> {
        match self {
            CriticForward::Patch(f) => &f.scores,
            CriticForward::Recurrent(f) => &f.scores,
        }
    }
}

enum CriticReplay {
    Patch(PatchReplay),
    Recurrent(RecurrentReplay),
}

impl Critic {
    pub fn patch(config: PatchConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Critic::Patch(PatchCritic::new(config, rng)?))
    }

    pub fn recurrent(
        k: usize,
        hidden: usize,
        lambda_gp: f64,
        loss_mode: LossMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Critic::Recurrent(RecurrentCritic::new(k, hidden, lambda_gp, loss_mode, rng)?))
    }

    pub fn k(&self) -> usize {
        match self {
            Critic::Patch(c) => c.config.k,
            Critic::Recurrent(c) => c.k,
        }
    }

    pub fn lambda_gp(&self) -> f64 {
        match self {
            Critic::Patch(c) => c.config.lambda_gp,
            Critic::Recurrent(c) => c.lambda_gp,
        }
    }

    pub fn loss_mode(&self) -> LossMode {
        match self {
            Critic::Patch(c) => c.config.loss_mode,
            Critic::Recurrent(c) => c.loss_mode,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<CriticForward> {
        match self {
            Critic::Patch(c) => Ok(CriticForward::Patch(c.patch_forward(x)?)),
            Critic::Recurrent(c) => Ok(CriticForward::Recurrent(c.forward(x)?)),
        }
    }

    /// Accumulate parameter gradients of `sum_i d_scores[i] * scores[i]`.
    /// Arbitrary per-score coefficients cover both the Wasserstein mean terms
    /// and cross-entropy logits.
    pub fn backward_scores(&mut self, fwd: &CriticForward, d_scores: &Array1<f64>) {
        match (self, fwd) {
            (Critic::Patch(c), CriticForward::Patch(f)) => c.backward_scores(f, d_scores),
            (Critic::Recurrent(c), CriticForward::Recurrent(f)) => c.backward_scores(f, d_scores),
            _ => panic!("critic forward cache does not match critic kind"),
        }
    }

    /// Gradient of the weighted score sum with respect to the critic input.
    pub fn input_grad(&self, fwd: &CriticForward, d_scores: &Array1<f64>) -> Array2<f64> {
        match (self, fwd) {
            (Critic::Patch(c), CriticForward::Patch(f)) => c.input_grad(f, d_scores),
            (Critic::Recurrent(c), CriticForward::Recurrent(f)) => c.input_grad(f, d_scores),
            _ => panic!("critic forward cache does not match critic kind"),
        }
    }

    fn input_grad_cached(&self, fwd: &CriticForward, d_scores: &Array1<f64>) -> (Array2<f64>, CriticReplay) {
        match (self, fwd) {
            (Critic::Patch(c), CriticForward::Patch(f)) => {
                let (g, r) = c.input_grad_cached(f, d_scores);
                (g, CriticReplay::Patch(r))
            }
            (Critic::Recurrent(c), CriticForward::Recurrent(f)) => {
                let (g, r) = c.input_grad_cached(f, d_scores);
                (g, CriticReplay::Recurrent(r))
            }
            _ => panic!("critic forward cache does not match critic kind"),
        }
    }

    fn penalty_core(
        &self,
        x: &Array2<f64>,
        x_prime: &Array2<f64>,
        eps: f64,
    ) -> Result<(f64, f64, CriticForward, CriticReplay, Array2<f64>, Array1<f64>)> {
        if x.dim() != x_prime.dim() {
            return Err(EraError::ShapeMismatch(format!(
                "gradient penalty operands must share a shape: {:?} vs {:?}",
                x.dim(),
                x_prime.dim()
            )));
        }
        if !(0.0..=1.0).contains(&eps) {
            return Err(EraError::InvalidArgument(format!(
                "interpolation eps must lie in [0, 1], got {eps}"
            )));
        }
        let x_interp = x * eps + x_prime * (1.0 - eps);
        let fwd = self.forward(&x_interp)?;
        let p = fwd.scores().len();
        let d_scores = Array1::from_elem(p, 1.0 / p as f64);
        let (g, replay) = self.input_grad_cached(&fwd, &d_scores);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gp = self.lambda_gp() * (norm - 1.0).powi(2);
        Ok((gp, norm, fwd, replay, g, d_scores))
    }

    /// `lambda * (||grad_x mean(critic(x_interp))||_F - 1)^2` at the
    /// interpolate `eps*x + (1-eps)*x_prime`. Read-only.
    pub fn gradient_penalty(&self, x: &Array2<f64>, x_prime: &Array2<f64>, eps: f64) -> Result<f64> {
        Ok(self.penalty_core(x, x_prime, eps)?.0)
    }

    /// Same value as [`Critic::gradient_penalty`], additionally accumulating
    /// its parameter gradients.
    pub fn gradient_penalty_with_grads(
        &mut self,
        x: &Array2<f64>,
        x_prime: &Array2<f64>,
        eps: f64,
    ) -> Result<f64> {
        let (gp, norm, fwd, replay, g, d_scores) = self.penalty_core(x, x_prime, eps)?;
        if norm < 1e-12 {
            // The norm's derivative blows up at zero; the penalty is flat
            // enough there that a zero gradient is the only sane choice.
            return Ok(gp);
        }
        let u = g * (2.0 * self.lambda_gp() * (norm - 1.0) / norm);
        match (self, &fwd, &replay) {
            (Critic::Patch(c), CriticForward::Patch(f), CriticReplay::Patch(r)) => {
                c.penalty_replay(f, r, &u, &d_scores)
            }
            (Critic::Recurrent(c), CriticForward::Recurrent(f), CriticReplay::Recurrent(r)) => {
                c.penalty_replay(f, r, &u, &d_scores)
            }
            _ => unreachable!("replay cache built from the same critic"),
        }
        Ok(gp)
    }
}

impl ParamSet for Critic {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        match self {
            Critic::Patch(c) => c.visit(f),
            Critic::Recurrent(c) => c.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        match self {
            Critic::Patch(c) => c.visit_mut(f),
            Critic::Recurrent(c) => c.visit_mut(f),
        }
    }
}

/// Components of one critic loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct CriticLossParts {
    pub total: f64,
    pub data_term: f64,
    pub gradient_penalty: f64,
    pub mean_real: f64,
    pub mean_fake: f64,
}

/// Critic objective on a real/reconstructed pair. Unknown modes are
/// unrepresentable here; config parsing rejects them by name.
pub fn critic_loss(
    critic: &Critic,
    x: &Array2<f64>,
    x_prime: &Array2<f64>,
    eps: f64,
    mode: LossMode,
) -> Result<CriticLossParts> {
    let mean_real = critic.forward(x)?.scores().mean().unwrap_or(0.0);
    let mean_fake = critic.forward(x_prime)?.scores().mean().unwrap_or(0.0);
    let gp = critic.gradient_penalty(x, x_prime, eps)?;
    let data_term = match mode {
        LossMode::Paper => (mean_real - mean_fake).abs(),
        LossMode::Standard => mean_fake - mean_real,
    };
    Ok(CriticLossParts {
        total: data_term + gp,
        data_term,
        gradient_penalty: gp,
        mean_real,
        mean_fake,
    })
}

/// Generator-side adversarial term: `-mean(critic_scores(x_prime))`.
pub fn generator_adversarial_loss(critic: &Critic, x_prime: &Array2<f64>) -> Result<f64> {
    Ok(-critic.forward(x_prime)?.scores().mean().unwrap_or(0.0))
}
