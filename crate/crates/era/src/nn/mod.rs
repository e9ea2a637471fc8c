//! Minimal neural-network plumbing: parameters with gradient buffers, seeded
//! Glorot initialization, an Adam optimizer, and a hand-written LSTM cell.
//!
//! Everything is `f64` and sequential. Forward passes return caches; backward
//! passes consume them and accumulate into [`Param::grad`]. There is no
//! autodiff tape — each model writes its own backward pass and the test suite
//! checks every one of them against central finite differences.

pub mod lstm;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// A trainable matrix (vectors are stored as `1×n` or `n×1`).
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param {
    /// Glorot-uniform initialized parameter: `U(-a, a)`, `a = sqrt(6/(fan_in+fan_out))`.
    pub fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let value = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a));
        let grad = Array2::zeros((rows, cols));
        Param { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param {
            value: Array2::zeros((rows, cols)),
            grad: Array2::zeros((rows, cols)),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Visitor over a model's named parameters. Names must be stable across runs:
/// they key the optimizer state and the checkpoint archive.
pub trait ParamSet {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param));

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |_, p| p.zero_grad());
    }

    fn named_values(&self) -> Vec<(String, Array2<f64>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, p| out.push((name.to_string(), p.value.clone())));
        out
    }

    fn grads_all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, p| {
            if !p.grad.iter().all(|v| v.is_finite()) {
                ok = false;
            }
        });
        ok
    }
}

#[derive(Debug, Clone)]
struct AdamSlot {
    m: Array2<f64>,
    v: Array2<f64>,
}

/// Adam with the usual defaults; only the learning rate is scheduled.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    slots: BTreeMap<String, AdamSlot>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            slots: BTreeMap::new(),
        }
    }

    /// Apply one update to every parameter of `model`, then clear gradients.
    pub fn step(&mut self, model: &mut dyn ParamSet) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, beta1, beta2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let slots = &mut self.slots;
        model.visit_mut(&mut |name, p| {
            let slot = slots.entry(name.to_string()).or_insert_with(|| AdamSlot {
                m: Array2::zeros(p.value.raw_dim()),
                v: Array2::zeros(p.value.raw_dim()),
            });
            ndarray::Zip::from(&mut p.value)
                .and(&mut slot.m)
                .and(&mut slot.v)
                .and(&p.grad)
                .for_each(|w, m, v, &g| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
            p.grad.fill(0.0);
        });
    }

    /// Optimizer state as named tensors (for resumable checkpoints).
    pub fn state_tensors(&self, prefix: &str) -> Vec<(String, Array2<f64>)> {
        let mut out = Vec::new();
        for (name, slot) in &self.slots {
            out.push((format!("{prefix}.{name}.m"), slot.m.clone()));
            out.push((format!("{prefix}.{name}.v"), slot.v.clone()));
        }
        out
    }

    /// Restore optimizer state saved by [`Adam::state_tensors`].
    pub fn load_state(&mut self, prefix: &str, t: u64, tensors: &BTreeMap<String, Array2<f64>>) {
        self.t = t;
        self.slots.clear();
        let pre = format!("{prefix}.");
        for (name, arr) in tensors {
            if let Some(rest) = name.strip_prefix(&pre) {
                if let Some(base) = rest.strip_suffix(".m") {
                    let slot = self.slots.entry(base.to_string()).or_insert_with(|| AdamSlot {
                        m: Array2::zeros(arr.raw_dim()),
                        v: Array2::zeros(arr.raw_dim()),
                    });
                    slot.m = arr.clone();
                } else if let Some(base) = rest.strip_suffix(".v") {
                    let slot = self.slots.entry(base.to_string()).or_insert_with(|| AdamSlot {
                        m: Array2::zeros(arr.raw_dim()),
                        v: Array2::zeros(arr.raw_dim()),
                    });
                    slot.v = arr.clone();
                }
            }
        }
    }
}

/// Numerically stable sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_arr(x: &Array1<f64>) -> Array1<f64> {
    x.mapv(sigmoid)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_row(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `relu` applied in place on a fresh copy.
pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Mask of strictly positive entries (the a.e. derivative of relu).
pub fn relu_mask(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}
