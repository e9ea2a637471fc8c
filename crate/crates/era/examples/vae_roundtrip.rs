//! Push one video through the summary VAE and train it briefly.
//!
//! Encode score-weighted features to a latent, decode back with the latent
//! re-fed at every step, and watch the reconstruction error fall over a few
//! hundred Adam updates. Uses uniform weights and a lightly weighted prior,
//! so this is the pure reconstruction path without the adversarial game.

use era::dataset::synthetic::{generate_synthetic_with, SynthOptions};
use era::nn::{Adam, ParamSet};
use era::rng::substream;
use era::vae::{
    prior_loss, prior_loss_grad, reconstruction_loss, reconstruction_loss_grad, reparameterize,
    Vae, VaeConfig,
};
use ndarray::Array1;
use rand_distr::{Distribution, StandardNormal};

fn main() -> era::Result<()> {
    let items = generate_synthetic_with(&SynthOptions {
        n_videos: 1,
        t_range: (14, 14),
        n_users: 2,
        entity_rate: 0.8,
        seed: 9,
        d_scene: 20,
        d_entity: 6,
    })?;
    let x = items[0].0.scene_features.clone();

    let cfg = VaeConfig { d_input: 20, d_hidden: 32, d_latent: 16, seed: 9 };
    let d_latent = cfg.d_latent;
    let mut vae = Vae::new(cfg)?;
    let mut opt = Adam::new(3e-3);
    let mut rng = substream(9, "example/vae");
    // A heavy prior collapses the latent before the decoder learns anything.
    let prior_weight = 1e-4;

    for step in 0..=200 {
        let enc = vae.encode(&x)?;
        let noise =
            Array1::from_shape_fn(d_latent, |_| StandardNormal.sample(&mut rng));
        let z = reparameterize(&enc.mu, &enc.logvar, &noise);
        let dec = vae.decode(&z, x.nrows())?;

        let recon = reconstruction_loss(&x, &dec.x_hat)?;
        let prior = prior_loss(&enc.mu, &enc.logvar);
        if step % 25 == 0 {
            println!("step {step:>3}: recon {recon:.5}  prior {prior:.5}");
        }
        if step == 200 {
            break;
        }

        vae.zero_grads();
        let d_x_hat = reconstruction_loss_grad(&x, &dec.x_hat);
        let d_z = vae.decode_backward(&dec, &d_x_hat);
        let (mut d_mu, mut d_logvar) = prior_loss_grad(&enc.mu, &enc.logvar);
        d_mu *= prior_weight;
        d_logvar *= prior_weight;
        // z = mu + exp(logvar/2) * noise, so d_z flows into both heads.
        d_mu += &d_z;
        let half_std = enc.logvar.mapv(|lv| 0.5 * (lv / 2.0).exp());
        d_logvar += &(&d_z * &noise * &half_std);
        vae.encode_backward(&enc, &d_mu, &d_logvar);
        opt.step(&mut vae);
    }
    Ok(())
}
