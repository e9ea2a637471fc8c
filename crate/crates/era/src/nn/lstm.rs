//! Single-layer LSTM with explicit backpropagation through time.
//!
//! Gate layout inside the `4H`-wide weight matrices is `[i|f|g|o]`
//! (input, forget, cell candidate, output).

use super::{sigmoid, Param, ParamSet};
use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Lstm {
    /// Input weights, `d_in × 4H`.
    pub wx: Param,
    /// Recurrent weights, `H × 4H`.
    pub wh: Param,
    /// Bias, `1 × 4H`.
    pub b: Param,
    pub d_in: usize,
    pub hidden: usize,
    name: String,
}

/// Per-step activations saved by the forward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub xs: Array2<f64>,
    /// `h_1..h_T`, one row per step.
    pub hs: Array2<f64>,
    /// `c_1..c_T`.
    cs: Array2<f64>,
    /// Post-activation gates `[i|f|g|o]`, one row per step.
    gates: Array2<f64>,
    h0: Array1<f64>,
    c0: Array1<f64>,
}

impl LstmCache {
    pub fn last_h(&self) -> Array1<f64> {
        let t = self.hs.nrows();
        self.hs.row(t - 1).to_owned()
    }
}

impl Lstm {
    pub fn new(name: &str, d_in: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Lstm {
            wx: Param::glorot(d_in, 4 * hidden, rng),
            wh: Param::glorot(hidden, 4 * hidden, rng),
            b: Param::zeros(1, 4 * hidden),
            d_in,
            hidden,
            name: name.to_string(),
        }
    }

    /// Run the cell over `xs` (`T × d_in`) from the given initial state.
    pub fn forward(&self, xs: &Array2<f64>, h0: &Array1<f64>, c0: &Array1<f64>) -> LstmCache {
        let t_len = xs.nrows();
        let h = self.hidden;
        let mut hs = Array2::zeros((t_len, h));
        let mut cs = Array2::zeros((t_len, h));
        let mut gates = Array2::zeros((t_len, 4 * h));
        let mut h_prev = h0.clone();
        let mut c_prev = c0.clone();
        for t in 0..t_len {
            let x_t = xs.row(t);
            let mut a = self.b.value.row(0).to_owned();
            a += &x_t.dot(&self.wx.value);
            a += &h_prev.dot(&self.wh.value);
            let mut g_row = gates.row_mut(t);
            for k in 0..h {
                g_row[k] = sigmoid(a[k]);
                g_row[h + k] = sigmoid(a[h + k]);
                g_row[2 * h + k] = a[2 * h + k].tanh();
                g_row[3 * h + k] = sigmoid(a[3 * h + k]);
            }
            let mut c_t = Array1::zeros(h);
            let mut h_t = Array1::zeros(h);
            for k in 0..h {
                let (i, f, g, o) = (g_row[k], g_row[h + k], g_row[2 * h + k], g_row[3 * h + k]);
                c_t[k] = f * c_prev[k] + i * g;
                h_t[k] = o * c_t[k].tanh();
            }
            hs.row_mut(t).assign(&h_t);
            cs.row_mut(t).assign(&c_t);
            h_prev = h_t;
            c_prev = c_t;
        }
        LstmCache {
            xs: xs.clone(),
            hs,
            cs,
            gates,
            h0: h0.clone(),
            c0: c0.clone(),
        }
    }

    /// BPTT. `d_hs` holds the loss gradient flowing into each `h_t` (the
    /// caller folds any extra last-step gradient into the last row).
    /// Accumulates parameter gradients and returns `(d_xs, d_h0, d_c0)`.
    pub fn backward(&mut self, cache: &LstmCache, d_hs: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let t_len = cache.xs.nrows();
        let h = self.hidden;
        let mut d_xs = Array2::zeros((t_len, self.d_in));
        let mut dh = Array1::<f64>::zeros(h);
        let mut dc = Array1::<f64>::zeros(h);
        for t in (0..t_len).rev() {
            dh += &d_hs.row(t);
            let g_row = cache.gates.row(t);
            let c_t = cache.cs.row(t);
            let c_prev = if t == 0 { cache.c0.view() } else { cache.cs.row(t - 1) };
            let h_prev = if t == 0 { cache.h0.view() } else { cache.hs.row(t - 1) };
            let mut da = Array1::zeros(4 * h);
            for k in 0..h {
                let (i, f, g, o) = (g_row[k], g_row[h + k], g_row[2 * h + k], g_row[3 * h + k]);
                let tc = c_t[k].tanh();
                let d_o = dh[k] * tc;
                let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
                let d_i = dck * g;
                let d_g = dck * i;
                let d_f = dck * c_prev[k];
                dc[k] = dck * f;
                da[k] = d_i * i * (1.0 - i);
                da[h + k] = d_f * f * (1.0 - f);
                da[2 * h + k] = d_g * (1.0 - g * g);
                da[3 * h + k] = d_o * o * (1.0 - o);
            }
            let x_t = cache.xs.row(t);
            for r in 0..self.d_in {
                for c in 0..4 * h {
                    self.wx.grad[[r, c]] += x_t[r] * da[c];
                }
            }
            for r in 0..h {
                for c in 0..4 * h {
                    self.wh.grad[[r, c]] += h_prev[r] * da[c];
                }
            }
            self.b.grad.row_mut(0).scaled_add(1.0, &da);
            d_xs.row_mut(t).assign(&da.dot(&self.wx.value.t()));
            dh = da.dot(&self.wh.value.t());
        }
        (d_xs, dh, dc)
    }
}

impl ParamSet for Lstm {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        f(&format!("{}.wx", self.name), &self.wx);
        f(&format!("{}.wh", self.name), &self.wh);
        f(&format!("{}.b", self.name), &self.b);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        let n = self.name.clone();
        f(&format!("{n}.wx"), &mut self.wx);
        f(&format!("{n}.wh"), &mut self.wh);
        f(&format!("{n}.b"), &mut self.b);
    }
}
