//! Score-conditioned sequence VAE: an encoder LSTM consumes score-weighted
//! frame features, a decoder LSTM seeded from the latent reconstructs the
//! original features. Training pits the reconstruction against the critic.

use crate::error::{EraError, Result};
use crate::nn::lstm::{Lstm, LstmCache};
use crate::nn::{Param, ParamSet};
use crate::rng::substream;
use ndarray::{Array1, Array2, Axis};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct VaeConfig {
    /// Input feature dimensionality (= D_s).
    pub d_input: usize,
    pub d_hidden: usize,
    pub d_latent: usize,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            d_input: 1024,
            d_hidden: 512,
            d_latent: 512,
            seed: 0,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_input == 0 || self.d_hidden == 0 || self.d_latent == 0 {
            return Err(EraError::InvalidArgument("vae dims must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Vae {
    pub cfg: VaeConfig,
    encoder: Lstm,
    w_mu: Param,
    b_mu: Param,
    w_logvar: Param,
    b_logvar: Param,
    /// Latent -> decoder initial hidden state (through tanh).
    w_h0: Param,
    b_h0: Param,
    decoder: Lstm,
    w_out: Param,
    b_out: Param,
}

#[derive(Debug, Clone)]
pub struct EncodeCache {
    pub weighted: Array2<f64>,
    lstm: LstmCache,
    pub mu: Array1<f64>,
    pub logvar: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct DecodeCache {
    z: Array1<f64>,
    h0: Array1<f64>,
    lstm: LstmCache,
    pub x_hat: Array2<f64>,
}

impl Vae {
    pub fn new(cfg: VaeConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = substream(cfg.seed, "vae");
        Ok(Vae {
            encoder: Lstm::new("vae.enc", cfg.d_input, cfg.d_hidden, &mut rng),
            w_mu: Param::glorot(cfg.d_hidden, cfg.d_latent, &mut rng),
            b_mu: Param::zeros(1, cfg.d_latent),
            w_logvar: Param::glorot(cfg.d_hidden, cfg.d_latent, &mut rng),
            b_logvar: Param::zeros(1, cfg.d_latent),
            w_h0: Param::glorot(cfg.d_latent, cfg.d_hidden, &mut rng),
            b_h0: Param::zeros(1, cfg.d_hidden),
            decoder: Lstm::new("vae.dec", cfg.d_latent, cfg.d_hidden, &mut rng),
            w_out: Param::glorot(cfg.d_hidden, cfg.d_input, &mut rng),
            b_out: Param::zeros(1, cfg.d_input),
            cfg,
        })
    }

    /// Encode score-weighted features; mu/logvar are linear in the final hidden state.
    pub fn encode(&self, weighted_features: &Array2<f64>) -> Result<EncodeCache> {
        if weighted_features.ncols() != self.cfg.d_input {
            return Err(EraError::ShapeMismatch(format!(
                "encoder expects {} feature dims, got {}",
                self.cfg.d_input,
                weighted_features.ncols()
            )));
        }
        if weighted_features.nrows() == 0 {
            return Err(EraError::InvalidArgument("cannot encode an empty sequence".into()));
        }
        let h0 = Array1::zeros(self.cfg.d_hidden);
        let c0 = Array1::zeros(self.cfg.d_hidden);
        let lstm = self.encoder.forward(weighted_features, &h0, &c0);
        let last = lstm.last_h();
        let mu = last.dot(&self.w_mu.value) + &self.b_mu.value.row(0);
        let logvar = last.dot(&self.w_logvar.value) + &self.b_logvar.value.row(0);
        Ok(EncodeCache {
            weighted: weighted_features.clone(),
            lstm,
            mu,
            logvar,
        })
    }

    /// Decode `T_d` frames from a latent; the latent is fed at every step.
    pub fn decode(&self, z: &Array1<f64>, t_d: usize) -> Result<DecodeCache> {
        if t_d == 0 {
            return Err(EraError::InvalidArgument("cannot decode zero frames".into()));
        }
        if z.len() != self.cfg.d_latent {
            return Err(EraError::ShapeMismatch(format!(
                "latent has {} dims, decoder expects {}",
                z.len(),
                self.cfg.d_latent
            )));
        }
        let h0 = (z.dot(&self.w_h0.value) + &self.b_h0.value.row(0)).mapv(f64::tanh);
        let c0 = Array1::zeros(self.cfg.d_hidden);
        let mut inputs = Array2::zeros((t_d, self.cfg.d_latent));
        for mut row in inputs.outer_iter_mut() {
            row.assign(z);
        }
        let lstm = self.decoder.forward(&inputs, &h0, &c0);
        let x_hat = lstm.hs.dot(&self.w_out.value) + &self.b_out.value;
        Ok(DecodeCache {
            z: z.clone(),
            h0,
            lstm,
            x_hat,
        })
    }

    /// Backward through the decoder. Accumulates parameter gradients and
    /// returns the loss gradient w.r.t. the latent.
    pub fn decode_backward(&mut self, cache: &DecodeCache, d_x_hat: &Array2<f64>) -> Array1<f64> {
        self.w_out.grad += &cache.lstm.hs.t().dot(d_x_hat);
        self.b_out.grad += &d_x_hat.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_hs = d_x_hat.dot(&self.w_out.value.t());
        let (d_inputs, d_h0, _d_c0) = self.decoder.backward(&cache.lstm, &d_hs);
        // h0 = tanh(z·W + b)
        let d_h0_pre = &d_h0 * &cache.h0.mapv(|h| 1.0 - h * h);
        let z_col = cache.z.view().insert_axis(Axis(1));
        let d_h0_row = d_h0_pre.view().insert_axis(Axis(0));
        self.w_h0.grad += &z_col.dot(&d_h0_row);
        self.b_h0.grad += &d_h0_row;
        let mut d_z = d_h0_pre.dot(&self.w_h0.value.t());
        d_z += &d_inputs.sum_axis(Axis(0));
        d_z
    }

    /// Backward through the encoder. Accumulates parameter gradients and
    /// returns the loss gradient w.r.t. the score-weighted inputs.
    pub fn encode_backward(&mut self, cache: &EncodeCache, d_mu: &Array1<f64>, d_logvar: &Array1<f64>) -> Array2<f64> {
        let last = cache.lstm.last_h();
        let last_col = last.view().insert_axis(Axis(1));
        self.w_mu.grad += &last_col.dot(&d_mu.view().insert_axis(Axis(0)));
        self.b_mu.grad += &d_mu.view().insert_axis(Axis(0));
        self.w_logvar.grad += &last_col.dot(&d_logvar.view().insert_axis(Axis(0)));
        self.b_logvar.grad += &d_logvar.view().insert_axis(Axis(0));
        let d_last = d_mu.dot(&self.w_mu.value.t()) + d_logvar.dot(&self.w_logvar.value.t());
        let t_d = cache.weighted.nrows();
        let mut d_hs = Array2::zeros((t_d, self.cfg.d_hidden));
        d_hs.row_mut(t_d - 1).assign(&d_last);
        let (d_inputs, _, _) = self.encoder.backward(&cache.lstm, &d_hs);
        d_inputs
    }
}

/// z = mu + exp(logvar/2) ⊙ noise.
pub fn reparameterize(mu: &Array1<f64>, logvar: &Array1<f64>, noise: &Array1<f64>) -> Array1<f64> {
    mu + &(logvar.mapv(|v| (v / 2.0).exp()) * noise)
}

/// KL divergence to the unit normal: 0.5 Σ (mu² + e^logvar − 1 − logvar).
pub fn prior_loss(mu: &Array1<f64>, logvar: &Array1<f64>) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar.iter())
        .map(|(&m, &lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Gradients of [`prior_loss`]: (d/dmu, d/dlogvar).
pub fn prior_loss_grad(mu: &Array1<f64>, logvar: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
    (mu.clone(), logvar.mapv(|lv| 0.5 * (lv.exp() - 1.0)))
}

/// Mean squared error over all entries.
pub fn reconstruction_loss(x: &Array2<f64>, x_hat: &Array2<f64>) -> Result<f64> {
    if x.dim() != x_hat.dim() {
        return Err(EraError::ShapeMismatch(format!(
            "reconstruction shapes differ: {:?} vs {:?}",
            x.dim(),
            x_hat.dim()
        )));
    }
    let n = x.len() as f64;
    Ok(x.iter().zip(x_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// d(reconstruction_loss)/d(x_hat).
pub fn reconstruction_loss_grad(x: &Array2<f64>, x_hat: &Array2<f64>) -> Array2<f64> {
    let n = x.len() as f64;
    (x_hat - x) * (2.0 / n)
}

impl ParamSet for Vae {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        self.encoder.visit(f);
        f("vae.w_mu", &self.w_mu);
        f("vae.b_mu", &self.b_mu);
        f("vae.w_logvar", &self.w_logvar);
        f("vae.b_logvar", &self.b_logvar);
        f("vae.w_h0", &self.w_h0);
        f("vae.b_h0", &self.b_h0);
        self.decoder.visit(f);
        f("vae.w_out", &self.w_out);
        f("vae.b_out", &self.b_out);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.encoder.visit_mut(f);
        f("vae.w_mu", &mut self.w_mu);
        f("vae.b_mu", &mut self.b_mu);
        f("vae.w_logvar", &mut self.w_logvar);
        f("vae.b_logvar", &mut self.b_logvar);
        f("vae.w_h0", &mut self.w_h0);
        f("vae.b_h0", &mut self.b_h0);
        self.decoder.visit_mut(f);
        f("vae.w_out", &mut self.w_out);
        f("vae.b_out", &mut self.b_out);
    }
}
