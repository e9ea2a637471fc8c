//! Adversarial training loop: the summarizer and VAE form the generator, the
//! critic is updated `n_critic` times per generator update, each batch is one
//! full video. Runs are deterministic for a given config and seed; reruns
//! produce byte-identical logs and checkpoints.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{collect_params, load_checkpoint, restore_params, save_checkpoint};
use crate::critic::{Critic, LossMode, PatchConfig};
use crate::dataset::{FrameDetections, VideoRecord};
use crate::error::{EraError, Result};
use crate::nn::{sigmoid, Adam, Param, ParamSet};
use crate::rng::substream;
use crate::stgraph::{assemble_adjacency, SpatioTemporalAdjacency};
use crate::summarizer::{Summarizer, SummarizerConfig};
use crate::vae::{
    prior_loss, prior_loss_grad, reconstruction_loss, reconstruction_loss_grad, reparameterize,
    Vae, VaeConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub recon: f64,
    pub prior: f64,
    pub sparsity: f64,
    pub score_sum: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            recon: 1.0,
            prior: 1.0,
            sparsity: 1.0,
            score_sum: 1.0,
            adversarial: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toggles {
    pub use_stgcn: bool,
    pub use_diff_attention: bool,
    pub use_wgan: bool,
    pub use_patch: bool,
    pub use_score_sum: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            use_stgcn: true,
            use_diff_attention: true,
            use_wgan: true,
            use_patch: true,
            use_score_sum: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay_factor: f64,
    /// The learning rate is multiplied by the decay factor once, for epochs
    /// after this one (1-indexed).
    pub lr_decay_epoch: usize,
    pub epochs: usize,
    /// Target summary rate for the sparsity term.
    pub sigma: f64,
    /// Critic updates per generator update.
    pub n_critic: usize,
    pub loss_weights: LossWeights,
    pub toggles: Toggles,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            lr_decay_factor: 0.1,
            lr_decay_epoch: 10,
            epochs: 30,
            sigma: 0.15,
            n_critic: 5,
            loss_weights: LossWeights::default(),
            toggles: Toggles::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push(format!("train.lr: must be positive, got {}", self.lr));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            problems.push(format!(
                "train.lr_decay_factor: must be positive, got {}",
                self.lr_decay_factor
            ));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            problems.push(format!("train.sigma: must lie in (0, 1), got {}", self.sigma));
        }
        if self.epochs == 0 {
            problems.push("train.epochs: must be at least 1".to_string());
        }
        if self.n_critic == 0 {
            problems.push("train.n_critic: must be at least 1".to_string());
        }
        let w = &self.loss_weights;
        for (name, v) in [
            ("recon", w.recon),
            ("prior", w.prior),
            ("sparsity", w.sparsity),
            ("score_sum", w.score_sum),
            ("adversarial", w.adversarial),
        ] {
            if !v.is_finite() {
                problems.push(format!("train.loss_weights.{name}: must be finite, got {v}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(EraError::Config(problems))
        }
    }

    /// Learning rate in force during `epoch` (1-indexed).
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        if epoch > self.lr_decay_epoch {
            self.lr * self.lr_decay_factor
        } else {
            self.lr
        }
    }
}

/// Length-normalized score mass: `(sum_t s_t) / sqrt(T)`.
pub fn score_sum_loss(s: &Array1<f64>) -> Result<f64> {
    if s.is_empty() {
        return Err(EraError::InvalidArgument(
            "score_sum_loss needs at least one score".to_string(),
        ));
    }
    Ok(s.sum() / (s.len() as f64).sqrt())
}

/// Squared deviation of the mean score from the target rate.
pub fn sparsity_loss(s: &Array1<f64>, sigma: f64) -> f64 {
    let mean = s.mean().unwrap_or(0.0);
    (mean - sigma).powi(2)
}

/// Discriminator cross-entropy on real/fake score logits, with per-logit
/// gradients. Used when the Wasserstein objective is toggled off.
pub fn bce_discriminator_loss(
    real: &Array1<f64>,
    fake: &Array1<f64>,
) -> (f64, Array1<f64>, Array1<f64>) {
    let nr = real.len() as f64;
    let nf = fake.len() as f64;
    // -mean log sigmoid(real) - mean log(1 - sigmoid(fake)), via softplus.
    let loss = real.iter().map(|&v| softplus(-v)).sum::<f64>() / nr
        + fake.iter().map(|&v| softplus(v)).sum::<f64>() / nf;
    let d_real = real.mapv(|v| -(1.0 - sigmoid(v)) / nr);
    let d_fake = fake.mapv(|v| sigmoid(v) / nf);
    (loss, d_real, d_fake)
}

/// Non-saturating generator cross-entropy `-mean log sigmoid(fake)`.
pub fn bce_generator_loss(fake: &Array1<f64>) -> (f64, Array1<f64>) {
    let nf = fake.len() as f64;
    let loss = fake.iter().map(|&v| softplus(-v)).sum::<f64>() / nf;
    let d_fake = fake.mapv(|v| -(1.0 - sigmoid(v)) / nf);
    (loss, d_fake)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// The three trainable networks of one run.
pub struct Models {
    pub summarizer: Summarizer,
    pub vae: Vae,
    pub critic: Critic,
}

/// Summarizer plus VAE as one parameter set, so a single optimizer updates
/// the whole generator.
struct GeneratorParams<'a> {
    summarizer: &'a mut Summarizer,
    vae: &'a mut Vae,
}

impl ParamSet for GeneratorParams<'_> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        self.summarizer.visit(f);
        self.vae.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.summarizer.visit_mut(f);
        self.vae.visit_mut(f);
    }
}

impl ParamSet for Models {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        self.summarizer.visit(f);
        self.vae.visit(f);
        self.critic.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        self.summarizer.visit_mut(f);
        self.vae.visit_mut(f);
        self.critic.visit_mut(f);
    }
}

/// Build all three networks from their configs, letting the training toggles
/// and seed override the per-model fields they govern.
pub fn build_models(
    sum_cfg: &SummarizerConfig,
    vae_cfg: &VaeConfig,
    critic_cfg: &PatchConfig,
    train: &TrainConfig,
) -> Result<Models> {
    train.validate()?;
    let mut sc = sum_cfg.clone();
    sc.use_stgcn = train.toggles.use_stgcn;
    sc.use_diff_attention = train.toggles.use_diff_attention;
    sc.seed = train.seed;
    let mut vc = vae_cfg.clone();
    vc.seed = train.seed;
    if vc.d_input != sc.d_scene {
        return Err(EraError::Config(vec![format!(
            "vae.d_input: must equal summarizer.d_scene ({}), got {}",
            sc.d_scene, vc.d_input
        )]));
    }
    let mut cc = critic_cfg.clone();
    cc.k = sc.d_scene;
    let critic = if train.toggles.use_patch {
        Critic::patch(cc, &mut substream(train.seed, "critic"))?
    } else {
        cc.validate()?;
        Critic::recurrent(
            sc.d_scene,
            vc.d_hidden,
            cc.lambda_gp,
            cc.loss_mode,
            &mut substream(train.seed, "critic"),
        )?
    };
    Ok(Models {
        summarizer: Summarizer::new(sc)?,
        vae: Vae::new(vc)?,
        critic,
    })
}

/// Per-term values of one generator update, after loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermValues {
    pub recon: f64,
    pub prior: f64,
    pub sparsity: f64,
    pub score_sum: f64,
    pub adversarial: f64,
    pub total: f64,
}

fn check_finite(value: f64, term: &str, epoch: usize, step: usize, video: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EraError::NonFiniteLoss {
            term: term.to_string(),
            epoch,
            step,
            video: video.to_string(),
        })
    }
}

fn sample_noise(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal))
}

/// One optimizer update of the generator on a single video; the critic is
/// read but never modified. Returns the unweighted term values plus the
/// weighted total actually minimized.
#[allow(clippy::too_many_arguments)]
pub fn generator_step(
    models: &mut Models,
    opt: &mut Adam,
    record: &VideoRecord,
    adj: &SpatioTemporalAdjacency,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    epoch: usize,
    step: usize,
) -> Result<TermValues> {
    let vid = &record.video_id;
    let x = &record.scene_features;
    let t_d = x.nrows();
    let w = &config.loss_weights;

    let cache = models.summarizer.forward(x, adj)?;
    let s = cache.scores.s_final.clone();
    let weighted = x * &s.view().insert_axis(Axis(1));
    let enc = models.vae.encode(&weighted)?;
    let noise = sample_noise(enc.mu.len(), rng);
    let z = reparameterize(&enc.mu, &enc.logvar, &noise);
    let dec = models.vae.decode(&z, t_d)?;

    let recon = check_finite(reconstruction_loss(x, &dec.x_hat)?, "recon", epoch, step, vid)?;
    let prior = check_finite(prior_loss(&enc.mu, &enc.logvar), "prior", epoch, step, vid)?;
    let sparsity = check_finite(sparsity_loss(&s, config.sigma), "sparsity", epoch, step, vid)?;
    let score_sum = if config.toggles.use_score_sum {
        check_finite(score_sum_loss(&s)?, "score_sum", epoch, step, vid)?
    } else {
        0.0
    };

    let critic_fwd = models.critic.forward(&dec.x_hat)?;
    let fake_scores = critic_fwd.scores();
    let (adversarial, d_scores_unit) = if config.toggles.use_wgan {
        let p = fake_scores.len() as f64;
        (
            -fake_scores.mean().unwrap_or(0.0),
            Array1::from_elem(fake_scores.len(), -1.0 / p),
        )
    } else {
        bce_generator_loss(fake_scores)
    };
    let adversarial = check_finite(adversarial, "adversarial", epoch, step, vid)?;

    let total = w.recon * recon
        + w.prior * prior
        + w.sparsity * sparsity
        + w.score_sum * score_sum
        + w.adversarial * adversarial;
    let total = check_finite(total, "total", epoch, step, vid)?;

    // Backward, deepest output first.
    models.summarizer.zero_grads();
    models.vae.zero_grads();

    let mut d_x_hat = reconstruction_loss_grad(x, &dec.x_hat) * w.recon;
    if w.adversarial != 0.0 {
        let d_scores = d_scores_unit * w.adversarial;
        d_x_hat += &models.critic.input_grad(&critic_fwd, &d_scores);
    }
    let d_z = models.vae.decode_backward(&dec, &d_x_hat);

    let (d_mu_prior, d_logvar_prior) = prior_loss_grad(&enc.mu, &enc.logvar);
    let d_mu = &d_z + &(d_mu_prior * w.prior);
    // z = mu + exp(logvar/2) * noise
    let d_logvar = &d_z * &noise * &enc.logvar.mapv(|v| 0.5 * (v / 2.0).exp())
        + d_logvar_prior * w.prior;
    let d_weighted = models.vae.encode_backward(&enc, &d_mu, &d_logvar);

    // weighted[t,:] = x[t,:] * s[t]
    let mut d_s = (&d_weighted * x).sum_axis(Axis(1));
    let t = t_d as f64;
    let mean_s = s.mean().unwrap_or(0.0);
    d_s += w.sparsity * 2.0 * (mean_s - config.sigma) / t;
    if config.toggles.use_score_sum {
        d_s += w.score_sum / t.sqrt();
    }
    models.summarizer.backward(adj, &cache, &d_s);

    let mut gen = GeneratorParams {
        summarizer: &mut models.summarizer,
        vae: &mut models.vae,
    };
    if !gen.grads_all_finite() {
        return Err(EraError::NonFiniteLoss {
            term: "generator gradients".to_string(),
            epoch,
            step,
            video: vid.to_string(),
        });
    }
    opt.step(&mut gen);

    Ok(TermValues {
        recon,
        prior,
        sparsity,
        score_sum,
        adversarial,
        total,
    })
}

/// One optimizer update of the critic on a single video; generator params are
/// read to produce the reconstruction but never modified.
#[allow(clippy::too_many_arguments)]
pub fn critic_step(
    models: &mut Models,
    opt: &mut Adam,
    record: &VideoRecord,
    adj: &SpatioTemporalAdjacency,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    epoch: usize,
    step: usize,
) -> Result<f64> {
    let vid = &record.video_id;
    let x = &record.scene_features;

    let scores = models.summarizer.forward(x, adj)?.scores;
    let weighted = x * &scores.s_final.view().insert_axis(Axis(1));
    let enc = models.vae.encode(&weighted)?;
    let noise = sample_noise(enc.mu.len(), rng);
    let z = reparameterize(&enc.mu, &enc.logvar, &noise);
    let x_hat = models.vae.decode(&z, x.nrows())?.x_hat;

    let fwd_real = models.critic.forward(x)?;
    let fwd_fake = models.critic.forward(&x_hat)?;

    models.critic.zero_grads();
    let loss = if config.toggles.use_wgan {
        let m_r = fwd_real.scores().mean().unwrap_or(0.0);
        let m_f = fwd_fake.scores().mean().unwrap_or(0.0);
        let p_r = fwd_real.scores().len() as f64;
        let p_f = fwd_fake.scores().len() as f64;
        let (data, d_real, d_fake) = match models.critic.loss_mode() {
            LossMode::Standard => (
                m_f - m_r,
                Array1::from_elem(fwd_real.scores().len(), -1.0 / p_r),
                Array1::from_elem(fwd_fake.scores().len(), 1.0 / p_f),
            ),
            LossMode::Paper => {
                let sg = (m_r - m_f).signum();
                let sg = if m_r == m_f { 0.0 } else { sg };
                (
                    (m_r - m_f).abs(),
                    Array1::from_elem(fwd_real.scores().len(), sg / p_r),
                    Array1::from_elem(fwd_fake.scores().len(), -sg / p_f),
                )
            }
        };
        models.critic.backward_scores(&fwd_real, &d_real);
        models.critic.backward_scores(&fwd_fake, &d_fake);
        let eps: f64 = rng.gen();
        let gp = models.critic.gradient_penalty_with_grads(x, &x_hat, eps)?;
        data + gp
    } else {
        let (loss, d_real, d_fake) = bce_discriminator_loss(fwd_real.scores(), fwd_fake.scores());
        models.critic.backward_scores(&fwd_real, &d_real);
        models.critic.backward_scores(&fwd_fake, &d_fake);
        loss
    };
    let loss = check_finite(loss, "critic", epoch, step, vid)?;
    if !models.critic.grads_all_finite() {
        return Err(EraError::NonFiniteLoss {
            term: "critic gradients".to_string(),
            epoch,
            step,
            video: vid.to_string(),
        });
    }
    opt.step(&mut models.critic);
    Ok(loss)
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub step: usize,
    pub video_id: String,
    pub terms: LogTerms,
    pub lr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogTerms {
    pub recon: f64,
    pub prior: f64,
    pub sparsity: f64,
    pub score_sum: f64,
    pub adversarial: f64,
    pub total: f64,
    /// Mean critic loss over this step's `n_critic` updates.
    pub critic: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub best_path: PathBuf,
    pub last_path: PathBuf,
    pub log_path: PathBuf,
    pub best_total: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub steps_run: usize,
    pub final_lr: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    epoch: usize,
    step: usize,
    best_total: f64,
    summarizer: SummarizerConfig,
    vae: VaeConfig,
    critic: PatchConfig,
    train: TrainConfig,
    adam_t: Option<(u64, u64)>,
}

/// Rebuild the models a checkpoint was trained with and load its weights.
pub fn models_from_checkpoint(path: &Path) -> Result<(Models, TrainConfig)> {
    let (meta_value, tensors) = load_checkpoint(path)?;
    let meta: CheckpointMeta = serde_json::from_value(meta_value)
        .map_err(|e| EraError::Checkpoint(format!("{}: bad meta block: {e}", path.display())))?;
    let mut models = build_models(&meta.summarizer, &meta.vae, &meta.critic, &meta.train)?;
    restore_params(&mut models, &tensors)?;
    Ok((models, meta.train))
}

/// Train on `train_items`, writing `best.ckpt`, `last.ckpt`, and
/// `train_log.jsonl` under `out_dir`. `resume` continues from a `last.ckpt`
/// written by an earlier run of the same config.
pub fn fit(
    train_items: &[(VideoRecord, FrameDetections)],
    sum_cfg: &SummarizerConfig,
    vae_cfg: &VaeConfig,
    critic_cfg: &PatchConfig,
    config: &TrainConfig,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<FitResult> {
    config.validate()?;
    if train_items.is_empty() {
        return Err(EraError::InvalidArgument(
            "training split contains no videos".to_string(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let best_path = out_dir.join("best.ckpt");
    let last_path = out_dir.join("last.ckpt");
    let log_path = out_dir.join("train_log.jsonl");

    let adjacencies: Vec<SpatioTemporalAdjacency> = train_items
        .iter()
        .map(|(_, dets)| assemble_adjacency(dets))
        .collect::<Result<_>>()?;

    let mut models = build_models(sum_cfg, vae_cfg, critic_cfg, config)?;
    let mut opt_gen = Adam::new(config.lr);
    let mut opt_critic = Adam::new(config.lr);
    let mut start_epoch = 1usize;
    let mut best_total = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_snapshot: Option<(BTreeMap<String, Array2<f64>>, usize, usize)> = None;

    if let Some(resume_path) = resume {
        let (meta_value, tensors) = load_checkpoint(resume_path)?;
        let meta: CheckpointMeta = serde_json::from_value(meta_value).map_err(|e| {
            EraError::Checkpoint(format!("{}: bad meta block: {e}", resume_path.display()))
        })?;
        if meta.kind != "last" {
            return Err(EraError::Checkpoint(format!(
                "{}: resume needs a `last` checkpoint with optimizer state, found `{}`",
                resume_path.display(),
                meta.kind
            )));
        }
        restore_params(&mut models, &tensors)?;
        let (t_gen, t_critic) = meta.adam_t.unwrap_or((0, 0));
        opt_gen.load_state("adam.gen", t_gen, &tensors);
        opt_critic.load_state("adam.critic", t_critic, &tensors);
        start_epoch = meta.epoch + 1;
        best_total = meta.best_total;
        best_epoch = 0;
        if best_path.exists() {
            let (best_meta, best_tensors) = load_checkpoint(&best_path)?;
            if let Ok(bm) = serde_json::from_value::<CheckpointMeta>(best_meta) {
                best_epoch = bm.epoch;
                best_snapshot = Some((best_tensors, bm.epoch, bm.step));
            }
        }
    }

    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .write(true)
        .open(&log_path)?;

    let meta_for = |kind: &str, epoch: usize, step: usize, best: f64, adam_t: Option<(u64, u64)>| {
        serde_json::to_value(CheckpointMeta {
            kind: kind.to_string(),
            epoch,
            step,
            best_total: best,
            summarizer: sum_cfg.clone(),
            vae: vae_cfg.clone(),
            critic: critic_cfg.clone(),
            train: config.clone(),
            adam_t,
        })
        .expect("checkpoint meta serializes")
    };

    let mut step = (start_epoch - 1) * train_items.len();
    let mut final_lr = config.lr_at_epoch(start_epoch.max(1));
    for epoch in start_epoch..=config.epochs {
        let lr = config.lr_at_epoch(epoch);
        final_lr = lr;
        opt_gen.lr = lr;
        opt_critic.lr = lr;
        let mut rng = substream(config.seed, &format!("train/epoch{epoch}"));
        let mut order: Vec<usize> = (0..train_items.len()).collect();
        order.shuffle(&mut rng);

        for &idx in &order {
            step += 1;
            let (record, _) = &train_items[idx];
            let adj = &adjacencies[idx];

            let mut critic_sum = 0.0;
            for _ in 0..config.n_critic {
                critic_sum +=
                    critic_step(&mut models, &mut opt_critic, record, adj, config, &mut rng, epoch, step)?;
            }
            let terms = generator_step(
                &mut models, &mut opt_gen, record, adj, config, &mut rng, epoch, step,
            )?;

            let rec = LogRecord {
                epoch,
                step,
                video_id: record.video_id.clone(),
                terms: LogTerms {
                    recon: terms.recon,
                    prior: terms.prior,
                    sparsity: terms.sparsity,
                    score_sum: terms.score_sum,
                    adversarial: terms.adversarial,
                    total: terms.total,
                    critic: critic_sum / config.n_critic as f64,
                },
                lr,
            };
            serde_json::to_writer(&mut log, &rec)?;
            log.write_all(b"\n")?;

            if terms.total < best_total {
                best_total = terms.total;
                best_epoch = epoch;
                let mut tensors = BTreeMap::new();
                let gen = GeneratorParams {
                    summarizer: &mut models.summarizer,
                    vae: &mut models.vae,
                };
                collect_params(&gen, &mut tensors);
                collect_params(&models.critic, &mut tensors);
                best_snapshot = Some((tensors, epoch, step));
            }
        }

        // Refresh on-disk state every epoch so interrupted runs can resume.
        let mut tensors = BTreeMap::new();
        collect_params(&models, &mut tensors);
        for (name, arr) in opt_gen.state_tensors("adam.gen") {
            tensors.insert(name, arr);
        }
        for (name, arr) in opt_critic.state_tensors("adam.critic") {
            tensors.insert(name, arr);
        }
        save_checkpoint(
            &last_path,
            &meta_for("last", epoch, step, best_total, Some((opt_gen.t, opt_critic.t))),
            &tensors,
        )?;
        if let Some((tensors, b_epoch, b_step)) = &best_snapshot {
            save_checkpoint(&best_path, &meta_for("best", *b_epoch, *b_step, best_total, None), tensors)?;
        }
    }
    log.flush()?;

    Ok(FitResult {
        best_path,
        last_path,
        log_path,
        best_total,
        best_epoch,
        epochs_run: config.epochs.saturating_sub(start_epoch - 1),
        steps_run: step,
        final_lr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::{generate_synthetic_with, SynthOptions};
    use ndarray::array;

    fn tiny_synth(n_videos: usize, seed: u64) -> Vec<(VideoRecord, FrameDetections)> {
        let opts = SynthOptions {
            n_videos,
            t_range: (12, 18),
            n_users: 3,
            entity_rate: 0.8,
            seed,
            d_scene: 16,
            d_entity: 6,
        };
        generate_synthetic_with(&opts).unwrap()
    }

    fn tiny_configs(toggles: Toggles, seed: u64) -> (SummarizerConfig, VaeConfig, PatchConfig, TrainConfig) {
        let sum_cfg = SummarizerConfig {
            d_entity: 6,
            d_scene: 16,
            gcn_hidden: 8,
            gcn_layers: 3,
            mlp_hidden: 12,
            ..SummarizerConfig::default()
        };
        let vae_cfg = VaeConfig {
            d_input: 16,
            d_hidden: 10,
            d_latent: 8,
            seed,
        };
        let critic_cfg = PatchConfig {
            k: 16,
            m: 1,
            ..PatchConfig::default()
        };
        let train = TrainConfig {
            epochs: 2,
            toggles,
            seed,
            ..TrainConfig::default()
        };
        (sum_cfg, vae_cfg, critic_cfg, train)
    }

    #[test]
    fn score_sum_examples() {
        assert_eq!(score_sum_loss(&Array1::zeros(5)).unwrap(), 0.0);
        let ones = array![1.0, 1.0, 1.0, 1.0];
        assert!((score_sum_loss(&ones).unwrap() - 2.0).abs() < 1e-12);
        let mixed = array![0.2, 0.4, 0.4];
        assert!((score_sum_loss(&mixed).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!(score_sum_loss(&Array1::zeros(0)).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let s = array![0.15, 0.15];
        assert_eq!(sparsity_loss(&s, 0.15), 0.0);
        let s2 = array![0.65];
        assert!((sparsity_loss(&s2, 0.15) - 0.25).abs() < 1e-12);
        let ones = array![1.0, 1.0, 1.0];
        assert!((sparsity_loss(&ones, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation_collects_all_problems() {
        let bad = TrainConfig {
            lr: 0.0,
            sigma: 1.0,
            epochs: 0,
            n_critic: 0,
            ..TrainConfig::default()
        };
        match bad.validate() {
            Err(EraError::Config(problems)) => assert_eq!(problems.len(), 4),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn lr_schedule_decays_once() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at_epoch(1), 1e-4);
        assert_eq!(cfg.lr_at_epoch(10), 1e-4);
        assert!((cfg.lr_at_epoch(11) - 1e-5).abs() < 1e-18);
        assert!((cfg.lr_at_epoch(30) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn bce_losses_behave_at_confident_outputs() {
        let real = array![50.0, 60.0];
        let fake = array![-50.0, -55.0];
        let (loss, _, _) = bce_discriminator_loss(&real, &fake);
        assert!(loss < 1e-20, "perfect discriminator should score ~0, got {loss}");

        let (gen_good, _) = bce_generator_loss(&array![50.0]);
        assert!(gen_good < 1e-20);
        let (gen_bad, _) = bce_generator_loss(&array![-50.0]);
        assert!((gen_bad - 50.0).abs() < 1e-9);
    }

    #[test]
    fn generator_step_respects_weights() {
        let items = tiny_synth(1, 7);
        let (sum_cfg, vae_cfg, critic_cfg, mut train) = tiny_configs(Toggles::default(), 7);
        train.loss_weights = LossWeights {
            recon: 1.0,
            prior: 0.0,
            sparsity: 0.0,
            score_sum: 0.0,
            adversarial: 0.0,
        };
        let mut models = build_models(&sum_cfg, &vae_cfg, &critic_cfg, &train).unwrap();
        let mut opt = Adam::new(train.lr);
        let adj = assemble_adjacency(&items[0].1).unwrap();
        let mut rng = substream(7, "test/gen-step");
        let terms =
            generator_step(&mut models, &mut opt, &items[0].0, &adj, &train, &mut rng, 1, 1).unwrap();
        assert!((terms.total - terms.recon).abs() < 1e-12, "total must reduce to the recon term");
        assert!(terms.recon > 0.0);
    }

    #[test]
    fn steps_are_deterministic() {
        let items = tiny_synth(1, 9);
        let (sum_cfg, vae_cfg, critic_cfg, train) = tiny_configs(Toggles::default(), 9);
        let adj = assemble_adjacency(&items[0].1).unwrap();

        let run = || {
            let mut models = build_models(&sum_cfg, &vae_cfg, &critic_cfg, &train).unwrap();
            let mut opt_g = Adam::new(train.lr);
            let mut opt_c = Adam::new(train.lr);
            let mut rng = substream(9, "test/det");
            let c = critic_step(&mut models, &mut opt_c, &items[0].0, &adj, &train, &mut rng, 1, 1)
                .unwrap();
            let g = generator_step(&mut models, &mut opt_g, &items[0].0, &adj, &train, &mut rng, 1, 1)
                .unwrap();
            (c, g, models.named_values())
        };
        let (c1, g1, p1) = run();
        let (c2, g2, p2) = run();
        assert_eq!(c1, c2);
        assert_eq!(g1, g2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn reconstruction_improves_over_200_steps() {
        // Generator-only smoke: recon must at least halve on one video.
        let items = tiny_synth(1, 11);
        let (sum_cfg, mut vae_cfg, critic_cfg, mut train) = tiny_configs(Toggles::default(), 11);
        vae_cfg.d_hidden = 32;
        vae_cfg.d_latent = 16;
        train.lr = 3e-3;
        train.loss_weights = LossWeights {
            recon: 1.0,
            prior: 1e-4,
            sparsity: 0.0,
            score_sum: 0.0,
            adversarial: 0.0,
        };
        let mut models = build_models(&sum_cfg, &vae_cfg, &critic_cfg, &train).unwrap();
        let mut opt = Adam::new(train.lr);
        let adj = assemble_adjacency(&items[0].1).unwrap();
        let mut rng = substream(11, "test/smoke");
        let mut first = 0.0;
        let mut last = 0.0;
        for i in 0..200 {
            let terms =
                generator_step(&mut models, &mut opt, &items[0].0, &adj, &train, &mut rng, 1, i + 1)
                    .unwrap();
            if i == 0 {
                first = terms.recon;
            }
            last = terms.recon;
        }
        assert!(
            last <= 0.5 * first,
            "recon {first} -> {last}; expected at least a 50% reduction"
        );
    }

    #[test]
    fn score_mass_drifts_down_under_score_sum_loss() {
        let items = tiny_synth(1, 13);
        let (sum_cfg, vae_cfg, critic_cfg, mut train) = tiny_configs(Toggles::default(), 13);
        train.loss_weights = LossWeights {
            recon: 0.0,
            prior: 0.0,
            sparsity: 0.0,
            score_sum: 1.0,
            adversarial: 0.0,
        };
        let mut models = build_models(&sum_cfg, &vae_cfg, &critic_cfg, &train).unwrap();
        let mut opt = Adam::new(train.lr);
        let adj = assemble_adjacency(&items[0].1).unwrap();
        let mut rng = substream(13, "test/drift");
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            generator_step(&mut models, &mut opt, &items[0].0, &adj, &train, &mut rng, 1, i + 1)
                .unwrap();
            let scores = models.summarizer.summarize(&items[0].0, &items[0].1).unwrap();
            let mean = scores.s_final.mean().unwrap();
            assert!(
                mean <= prev + 1e-12,
                "step {i}: mean score rose from {prev} to {mean}"
            );
            prev = mean;
        }
    }

    #[test]
    fn fit_writes_log_and_checkpoints() {
        let items = tiny_synth(3, 17);
        let (sum_cfg, vae_cfg, critic_cfg, mut train) = tiny_configs(Toggles::default(), 17);
        train.epochs = 1;
        let dir = tempfile::tempdir().unwrap();
        let result = fit(&items, &sum_cfg, &vae_cfg, &critic_cfg, &train, dir.path(), None).unwrap();
        assert!(result.best_path.exists());
        assert!(result.last_path.exists());
        let log = std::fs::read_to_string(&result.log_path).unwrap();
        let records: Vec<LogRecord> =
            log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(records.len(), 3, "1 epoch x 3 videos");
        for r in &records {
            assert_eq!(r.epoch, 1);
            assert!(r.terms.total.is_finite());
            assert!(r.terms.critic.is_finite());
            assert_eq!(r.lr, train.lr);
        }
        let (models, _) = models_from_checkpoint(&result.best_path).unwrap();
        let scores = models.summarizer.summarize(&items[0].0, &items[0].1).unwrap();
        assert_eq!(scores.s_final.len(), items[0].0.t_downsampled());
    }

    #[test]
    fn fit_is_deterministic_across_reruns() {
        let items = tiny_synth(2, 19);
        let (sum_cfg, vae_cfg, critic_cfg, mut train) = tiny_configs(Toggles::default(), 19);
        train.epochs = 2;
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let r1 = fit(&items, &sum_cfg, &vae_cfg, &critic_cfg, &train, d1.path(), None).unwrap();
        let r2 = fit(&items, &sum_cfg, &vae_cfg, &critic_cfg, &train, d2.path(), None).unwrap();
        let digest = crate::checkpoint::file_digest;
        assert_eq!(digest(&r1.best_path).unwrap(), digest(&r2.best_path).unwrap());
        assert_eq!(digest(&r1.last_path).unwrap(), digest(&r2.last_path).unwrap());
        assert_eq!(
            std::fs::read(&r1.log_path).unwrap(),
            std::fs::read(&r2.log_path).unwrap()
        );
    }

    #[test]
    fn fit_resumes_from_last_checkpoint() {
        let items = tiny_synth(2, 23);
        let (sum_cfg, vae_cfg, critic_cfg, mut train) = tiny_configs(Toggles::default(), 23);
        train.epochs = 1;
        let dir = tempfile::tempdir().unwrap();
        let r1 = fit(&items, &sum_cfg, &vae_cfg, &critic_cfg, &train, dir.path(), None).unwrap();
        train.epochs = 2;
        let r2 = fit(
            &items, &sum_cfg, &vae_cfg, &critic_cfg, &train, dir.path(),
            Some(&r1.last_path.clone()),
        )
        .unwrap();
        assert_eq!(r2.epochs_run, 1, "resume should only run the remaining epoch");
        let log = std::fs::read_to_string(&r2.log_path).unwrap();
        let records: Vec<LogRecord> =
            log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(records.len(), 4, "2 videos x 2 epochs accumulated across runs");
        assert_eq!(records.last().unwrap().epoch, 2);
    }

    #[test]
    fn fit_rejects_empty_split() {
        let (sum_cfg, vae_cfg, critic_cfg, train) = tiny_configs(Toggles::default(), 29);
        let dir = tempfile::tempdir().unwrap();
        let err = fit(&[], &sum_cfg, &vae_cfg, &critic_cfg, &train, dir.path(), None).unwrap_err();
        assert!(matches!(err, EraError::InvalidArgument(_)));
    }

    #[test]
    fn divergent_run_aborts_with_named_term() {
        let items = tiny_synth(1, 31);
        let (sum_cfg, vae_cfg, critic_cfg, mut train) = tiny_configs(Toggles::default(), 31);
        train.lr = 1e6; // force an immediate blow-up
        let mut models = build_models(&sum_cfg, &vae_cfg, &critic_cfg, &train).unwrap();
        let mut opt = Adam::new(train.lr);
        let adj = assemble_adjacency(&items[0].1).unwrap();
        let mut rng = substream(31, "test/blowup");
        let mut failed = None;
        for i in 0..5 {
            match generator_step(&mut models, &mut opt, &items[0].0, &adj, &train, &mut rng, 1, i + 1) {
                Ok(_) => {}
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        match failed {
            Some(EraError::NonFiniteLoss { term, .. }) => assert!(!term.is_empty()),
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn bce_mode_critic_step_runs() {
        let items = tiny_synth(1, 37);
        let toggles = Toggles {
            use_wgan: false,
            ..Toggles::default()
        };
        let (sum_cfg, vae_cfg, critic_cfg, train) = tiny_configs(toggles, 37);
        let mut models = build_models(&sum_cfg, &vae_cfg, &critic_cfg, &train).unwrap();
        let mut opt = Adam::new(train.lr);
        let adj = assemble_adjacency(&items[0].1).unwrap();
        let mut rng = substream(37, "test/bce");
        let loss =
            critic_step(&mut models, &mut opt, &items[0].0, &adj, &train, &mut rng, 1, 1).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
    }

    #[test]
    fn recurrent_critic_training_runs() {
        let items = tiny_synth(1, 41);
        let toggles = Toggles {
            use_patch: false,
            ..Toggles::default()
        };
        let (sum_cfg, vae_cfg, critic_cfg, mut train) = tiny_configs(toggles, 41);
        train.epochs = 1;
        let dir = tempfile::tempdir().unwrap();
        let result = fit(&items, &sum_cfg, &vae_cfg, &critic_cfg, &train, dir.path(), None).unwrap();
        assert!(result.best_total.is_finite());
    }
}
