//! Acceptance gate: nine criteria covering graph construction, the
//! evaluation oracles, loss formulas, the patch mechanism, gradient
//! correctness, training behavior, the end-to-end protocol, determinism,
//! and the ablation grid. One test per criterion; each prints its own
//! PASS line with timing and enforces its wall-clock budget.

use std::time::{Duration, Instant};

use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use era::checkpoint::file_digest;
use era::critic::{Critic, LossMode, PatchConfig, PATCH_STRIDE};
use era::dataset::splits::generate_splits;
use era::dataset::synthetic::{generate_synthetic_with, SynthOptions};
use era::dataset::{FrameDetections, FrameEntities, SplitMode, VideoRecord};
use era::evaluation::{
    evaluate_video, f_measure, knapsack_select, machine_frame_scores, random_baseline_scores,
    SummaryMask, ValueMode,
};
use era::nn::{Adam, Param, ParamSet};
use era::rng::substream;
use era::stgraph::assemble_adjacency;
use era::summarizer::{Summarizer, SummarizerConfig};
use era::training::{
    build_models, fit, generator_step, score_sum_loss, sparsity_loss, LossWeights, Toggles,
    TrainConfig,
};
use era::vae::{prior_loss, reconstruction_loss, reparameterize, Vae, VaeConfig};

fn report(criterion: usize, name: &str, started: Instant, budget: Duration) {
    let elapsed = started.elapsed();
    println!(
        "criterion {criterion} ({name}): PASS in {:.2}s (budget {:.0}s)",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(
        elapsed <= budget,
        "criterion {criterion} exceeded its {:.0}s budget: {:.2}s",
        budget.as_secs_f64(),
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------- criterion 1

/// Plain-equation reference for the spatio-temporal adjacency: spatial
/// softmax over IOU (self-term 1) on the diagonal, temporal softmax over
/// cosine on the first superdiagonal, empty frames contributing nothing and
/// breaking the temporal chain.
fn reference_adjacency(dets: &FrameDetections) -> Array2<f64> {
    let counts: Vec<usize> = dets.frames.iter().map(|f| f.n_entities()).collect();
    let mut offsets = vec![0usize];
    for &c in &counts {
        offsets.push(offsets.last().unwrap() + c);
    }
    let n_total = *offsets.last().unwrap();
    let mut e = Array2::zeros((n_total, n_total));

    let eps_vector = |d: usize| {
        let mut v = vec![0.0; d];
        v[0] = 1e-8;
        v
    };
    let cleaned = |feats: &Array2<f64>| -> Vec<Vec<f64>> {
        feats
            .outer_iter()
            .map(|row| {
                let norm_sq: f64 = row.iter().map(|v| v * v).sum();
                if norm_sq == 0.0 {
                    eps_vector(row.len())
                } else {
                    row.to_vec()
                }
            })
            .collect()
    };
    let softmax = |x: &[f64]| -> Vec<f64> {
        let exps: Vec<f64> = x.iter().map(|&v| v.exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.iter().map(|&v| v / sum).collect()
    };
    let ref_iou = |a: &[f64], b: &[f64]| -> f64 {
        let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
        let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
        let inter = ix * iy;
        let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
        inter / union
    };
    let cosine = |a: &[f64], b: &[f64]| -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        dot / (na * nb)
    };

    for t in 0..counts.len() {
        let nt = counts[t];
        if nt == 0 {
            continue;
        }
        let frame = &dets.frames[t];
        for i in 0..nt {
            let sims: Vec<f64> = (0..nt)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        ref_iou(
                            frame.boxes.row(i).as_slice().unwrap(),
                            frame.boxes.row(j).as_slice().unwrap(),
                        )
                    }
                })
                .collect();
            let row = softmax(&sims);
            for j in 0..nt {
                e[[offsets[t] + i, offsets[t] + j]] = row[j];
            }
        }
        if t + 1 < counts.len() && counts[t + 1] > 0 {
            let here = cleaned(&frame.features);
            let next = cleaned(&dets.frames[t + 1].features);
            for (i, fi) in here.iter().enumerate() {
                let sims: Vec<f64> = next.iter().map(|fj| cosine(fi, fj)).collect();
                let row = softmax(&sims);
                for (j, &v) in row.iter().enumerate() {
                    e[[offsets[t] + i, offsets[t + 1] + j]] = v;
                }
            }
        }
    }
    e
}

fn random_detections(rng: &mut ChaCha8Rng, t_d: usize, max_n: usize, d_o: usize) -> FrameDetections {
    let frames = (0..t_d)
        .map(|_| {
            let n = rng.gen_range(0..=max_n);
            let mut boxes = Array2::zeros((n, 4));
            for mut row in boxes.outer_iter_mut() {
                let x1: f64 = rng.gen_range(0.0..80.0);
                let y1: f64 = rng.gen_range(0.0..80.0);
                row[0] = x1;
                row[1] = y1;
                row[2] = x1 + rng.gen_range(1.0..50.0);
                row[3] = y1 + rng.gen_range(1.0..50.0);
            }
            let mut features = Array2::from_shape_fn((n, d_o), |_| rng.gen_range(-1.0..1.0));
            // Exercise the zero-norm guard on a slice of rows.
            for mut row in features.outer_iter_mut() {
                if rng.gen_bool(0.1) {
                    row.fill(0.0);
                }
            }
            FrameEntities { boxes, features }
        })
        .collect();
    FrameDetections { frames, d_entity: d_o }
}

#[test]
fn criterion_1_graph_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = substream(101, "acceptance/graph");
    for trial in 0..200 {
        let t_d = rng.gen_range(1..=3);
        let dets = random_detections(&mut rng, t_d, 3, 5);
        let adj = assemble_adjacency(&dets).unwrap();
        let dense = adj.matrix.to_dense();
        let reference = reference_adjacency(&dets);
        assert_eq!(dense.dim(), reference.dim(), "trial {trial}");
        for ((i, j), &v) in reference.indexed_iter() {
            assert!(
                (dense[[i, j]] - v).abs() <= 1e-12,
                "trial {trial}: entry ({i},{j}) {} vs reference {v}",
                dense[[i, j]]
            );
        }
        // Row-sum law: 2 with a non-empty successor frame, else 1.
        let sums = adj.matrix.row_sums();
        let counts: Vec<usize> = dets.frames.iter().map(|f| f.n_entities()).collect();
        let mut node = 0usize;
        for t in 0..t_d {
            let expect = if t + 1 < t_d && counts[t + 1] > 0 { 2.0 } else { 1.0 };
            for _ in 0..counts[t] {
                assert!(
                    (sums[node] - expect).abs() <= 1e-12,
                    "trial {trial}: node {node} row sum {} expected {expect}",
                    sums[node]
                );
                node += 1;
            }
        }
    }
    report(1, "graph oracle equivalence", started, Duration::from_secs(5));
}

// ---------------------------------------------------------------- criterion 2

/// Exhaustive knapsack with the production tie-break: value summed
/// back-to-front, lexicographically smallest optimal index set.
fn knapsack_brute_force(values: &[f64], lengths: &[usize], capacity: usize) -> Vec<bool> {
    let n = values.len();
    let mut best_value = 0.0f64;
    let mut best_ids: Vec<usize> = Vec::new();
    for mask in 0..(1u32 << n) {
        let ids: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if ids.iter().map(|&i| lengths[i]).sum::<usize>() > capacity {
            continue;
        }
        let mut value = 0.0;
        for &i in ids.iter().rev() {
            value = values[i] + value;
        }
        if value > best_value || (value == best_value && ids < best_ids) {
            best_value = value;
            best_ids = ids;
        }
    }
    let mut out = vec![false; n];
    for &i in &best_ids {
        out[i] = true;
    }
    out
}

#[test]
fn criterion_2_knapsack_and_f_measure_oracles() {
    let started = Instant::now();
    let mut rng = substream(102, "acceptance/knapsack");
    for trial in 0..200 {
        let n = rng.gen_range(1..=15);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let lengths: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=10)).collect();
        let capacity = rng.gen_range(0..=30);
        assert_eq!(
            knapsack_select(&values, &lengths, capacity),
            knapsack_brute_force(&values, &lengths, capacity),
            "trial {trial}: values {values:?} lengths {lengths:?} cap {capacity}"
        );
    }

    // Worked F case: |M| = 4, |U| = 5, overlap 2 gives P = 0.5, R = 0.4,
    // F = 4/9.
    let machine = SummaryMask {
        selected: vec![true, true, true, true, false, false, false, false, false],
    };
    let user = array![1u8, 1, 0, 0, 1, 1, 1, 0, 0];
    let f = f_measure(&machine, user.view()).unwrap();
    assert!((f - 4.0 / 9.0).abs() <= 1e-12, "worked case F {f}");

    // Degenerate conventions: empty machine and empty user both score 0.
    let empty = SummaryMask { selected: vec![false; 9] };
    assert_eq!(f_measure(&empty, user.view()).unwrap(), 0.0);
    let no_user = Array1::<u8>::zeros(9);
    assert_eq!(f_measure(&machine, no_user.view()).unwrap(), 0.0);

    report(2, "knapsack and F-measure oracles", started, Duration::from_secs(10));
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_loss_formulas() {
    let started = Instant::now();

    let ones = array![1.0, 1.0, 1.0, 1.0];
    assert!((score_sum_loss(&ones).unwrap() - 2.0).abs() <= 1e-9, "score-sum at all-ones");

    let scores = array![0.5, 0.8];
    assert!((sparsity_loss(&scores, 0.15) - 0.25).abs() <= 1e-9, "sparsity at mean 0.65");

    let mu = array![1.0];
    let logvar = array![0.0];
    assert!((prior_loss(&mu, &logvar) - 0.5).abs() <= 1e-9, "unit-mean prior");

    // A critic with all parameters zero is constant, so the interpolate
    // gradient is zero and the penalty is exactly lambda.
    let mut rng = substream(103, "acceptance/gp");
    let cfg = PatchConfig { k: 4, m: 1, ..PatchConfig::default() };
    let mut critic = Critic::patch(cfg, &mut rng).unwrap();
    critic.visit_mut(&mut |_, p: &mut Param| p.value.fill(0.0));
    let x = Array2::from_shape_fn((9, 4), |_| rng.gen_range(-1.0..1.0));
    let x_prime = Array2::from_shape_fn((9, 4), |_| rng.gen_range(-1.0..1.0));
    let gp = critic.gradient_penalty(&x, &x_prime, 0.37).unwrap();
    assert!((gp - 10.0).abs() <= 1e-9, "constant-critic penalty {gp}");

    report(3, "loss formulas", started, Duration::from_secs(5));
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_patch_mechanism() {
    let started = Instant::now();
    let mut rng = substream(104, "acceptance/patch");

    // Output length law over the full grid.
    for m in 0..=3usize {
        let cfg = PatchConfig { k: 3, m, ..PatchConfig::default() };
        let critic = Critic::patch(cfg, &mut rng).unwrap();
        for t in 1..=200usize {
            let x = Array2::from_shape_fn((t, 3), |_| rng.gen_range(-1.0..1.0));
            let fwd = critic.forward(&x).unwrap();
            let window = PATCH_STRIDE.pow(m as u32);
            let expect = t.div_ceil(window);
            assert_eq!(fwd.scores().len(), expect, "T {t}, M {m}");
        }
    }

    // Receptive-field locality: perturbing frame f changes no patch other
    // than f / 5^M, bit-exactly.
    for &(t, m) in &[(37usize, 1usize), (130, 2), (9, 1), (126, 3)] {
        let cfg = PatchConfig { k: 3, m, ..PatchConfig::default() };
        let critic = Critic::patch(cfg, &mut rng).unwrap();
        let x = Array2::from_shape_fn((t, 3), |_| rng.gen_range(-1.0..1.0));
        let base = critic.forward(&x).unwrap().scores().to_owned();
        let window = PATCH_STRIDE.pow(m as u32);
        for _ in 0..5 {
            let f = rng.gen_range(0..t);
            let mut x2 = x.clone();
            for v in x2.row_mut(f).iter_mut() {
                *v += rng.gen_range(0.5..1.5);
            }
            let perturbed = critic.forward(&x2).unwrap().scores().to_owned();
            for p in 0..base.len() {
                if p != f / window {
                    assert_eq!(
                        base[p], perturbed[p],
                        "T {t} M {m}: patch {p} moved when frame {f} changed"
                    );
                }
            }
        }
    }

    // T = 125, M = 3: one patch whose receptive field covers every frame.
    // With strictly positive weights and inputs, every pre-activation is
    // positive, so increasing any frame strictly raises the single score.
    let cfg = PatchConfig { k: 3, m: 3, ..PatchConfig::default() };
    let mut critic = Critic::patch(cfg, &mut rng).unwrap();
    critic.visit_mut(&mut |_, p: &mut Param| p.value.mapv_inplace(|v| v.abs() + 0.01));
    let x = Array2::from_shape_fn((125, 3), |_| rng.gen_range(0.1..1.0));
    let fwd = critic.forward(&x).unwrap();
    assert_eq!(fwd.scores().len(), 1, "125 frames collapse to one patch at M = 3");
    let base = fwd.scores()[0];
    for f in 0..125 {
        let mut x2 = x.clone();
        x2[[f, 0]] += 1.0;
        let bumped = critic.forward(&x2).unwrap().scores()[0];
        assert!(bumped > base, "frame {f} is outside the single patch's receptive field");
    }

    report(4, "patch mechanism", started, Duration::from_secs(30));
}

// ---------------------------------------------------------------- criterion 5

/// All parameter coordinates of params whose name starts with any prefix.
fn component_coords(params: &impl ParamSet, prefixes: &[&str]) -> Vec<(String, usize)> {
    let mut coords = Vec::new();
    params.visit(&mut |name, p: &Param| {
        if prefixes.iter().any(|pre| name.starts_with(pre)) {
            for idx in 0..p.value.len() {
                coords.push((name.to_string(), idx));
            }
        }
    });
    coords
}

fn param_grad(params: &impl ParamSet, name: &str, idx: usize) -> f64 {
    let mut out = None;
    params.visit(&mut |n, p: &Param| {
        if n == name {
            out = Some(p.grad.as_slice().unwrap()[idx]);
        }
    });
    out.expect("parameter exists")
}

fn nudge_param(params: &mut impl ParamSet, name: &str, idx: usize, to: f64) -> f64 {
    let mut old = None;
    params.visit_mut(&mut |n, p: &mut Param| {
        if n == name {
            let slot = &mut p.value.as_slice_mut().unwrap()[idx];
            old = Some(*slot);
            *slot = to;
        }
    });
    old.expect("parameter exists")
}

/// Central finite differences against the analytic gradient at `n_points`
/// random coordinates of the named component.
fn check_component<P: ParamSet>(
    params: &mut P,
    prefixes: &[&str],
    loss: &mut dyn FnMut(&P) -> f64,
    rng: &mut ChaCha8Rng,
    n_points: usize,
    label: &str,
) {
    let coords = component_coords(params, prefixes);
    assert!(!coords.is_empty(), "{label}: no parameters match {prefixes:?}");
    let h = 1e-5;
    for _ in 0..n_points {
        let (name, idx) = coords[rng.gen_range(0..coords.len())].clone();
        let analytic = param_grad(params, &name, idx);
        let center = nudge_param(params, &name, idx, 0.0);
        nudge_param(params, &name, idx, center + h);
        let up = loss(params);
        nudge_param(params, &name, idx, center - h);
        let down = loss(params);
        nudge_param(params, &name, idx, center);
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6);
        assert!(
            rel <= 1e-4,
            "{label} {name}[{idx}]: analytic {analytic} vs fd {fd} (rel {rel:.3e})"
        );
    }
}

fn jitter(params: &mut dyn ParamSet, rng: &mut ChaCha8Rng) {
    params.visit_mut(&mut |_, p: &mut Param| {
        p.value.mapv_inplace(|v| v + rng.gen_range(-0.05..0.05));
    });
}

#[test]
fn criterion_5_gradient_correctness() {
    let started = Instant::now();
    let mut rng = substream(105, "acceptance/fd");

    // One small real video supplies features and a graph.
    let items = generate_synthetic_with(&SynthOptions {
        n_videos: 1,
        t_range: (10, 10),
        n_users: 3,
        entity_rate: 0.8,
        seed: 23,
        d_scene: 10,
        d_entity: 5,
    })
    .unwrap();
    let (record, dets) = &items[0];
    let adj = assemble_adjacency(dets).unwrap();
    let features = record.scene_features.clone();

    // Summarizer components: GCN, fusion MLP, difference attention.
    // Loss: 0.5 * sum(s_final^2), whose upstream gradient is s_final itself.
    let sum_cfg = SummarizerConfig {
        d_entity: 5,
        d_scene: 10,
        gcn_hidden: 6,
        gcn_layers: 3,
        mlp_hidden: 7,
        ..SummarizerConfig::default()
    };
    let mut summarizer = Summarizer::new(sum_cfg.clone()).unwrap();
    jitter(&mut summarizer, &mut rng);
    {
        let cache = summarizer.forward(&features, &adj).unwrap();
        summarizer.zero_grads();
        let d_final = cache.scores.s_final.clone();
        summarizer.backward(&adj, &cache, &d_final);
    }
    let mut sum_loss = {
        let features = features.clone();
        let adj = adj.clone();
        move |s: &Summarizer| {
            let cache = s.forward(&features, &adj).unwrap();
            0.5 * cache.scores.s_final.iter().map(|v| v * v).sum::<f64>()
        }
    };
    for (prefixes, label) in [
        (&["gcn."][..], "gcn"),
        (&["fuse."][..], "fusion mlp"),
        (&["diff."][..], "difference attention"),
    ] {
        check_component(&mut summarizer, prefixes, &mut sum_loss, &mut rng, 5, label);
    }

    // VAE encoder and decoder under reconstruction + prior with fixed noise.
    let vae_cfg = VaeConfig { d_input: 10, d_hidden: 8, d_latent: 6, seed: 23 };
    let mut vae = Vae::new(vae_cfg.clone()).unwrap();
    jitter(&mut vae, &mut rng);
    let noise = Array1::from_shape_fn(6, |_| rng.gen_range(-1.0..1.0));
    let vae_loss_of = |v: &Vae, x: &Array2<f64>, noise: &Array1<f64>| -> f64 {
        let enc = v.encode(x).unwrap();
        let z = reparameterize(&enc.mu, &enc.logvar, noise);
        let dec = v.decode(&z, x.nrows()).unwrap();
        reconstruction_loss(x, &dec.x_hat).unwrap() + prior_loss(&enc.mu, &enc.logvar)
    };
    {
        let enc = vae.encode(&features).unwrap();
        let z = reparameterize(&enc.mu, &enc.logvar, &noise);
        let dec = vae.decode(&z, features.nrows()).unwrap();
        vae.zero_grads();
        let d_x_hat = era::vae::reconstruction_loss_grad(&features, &dec.x_hat);
        let d_z = vae.decode_backward(&dec, &d_x_hat);
        let (mut d_mu, mut d_logvar) = era::vae::prior_loss_grad(&enc.mu, &enc.logvar);
        d_mu += &d_z;
        let half_std = enc.logvar.mapv(|lv| 0.5 * (lv / 2.0).exp());
        d_logvar += &(&d_z * &noise * &half_std);
        vae.encode_backward(&enc, &d_mu, &d_logvar);
    }
    let mut vae_loss = {
        let features = features.clone();
        let noise = noise.clone();
        move |v: &Vae| vae_loss_of(v, &features, &noise)
    };
    for (prefixes, label) in [
        (&["vae.enc", "vae.w_mu", "vae.b_mu", "vae.w_logvar", "vae.b_logvar"][..], "encoder"),
        (&["vae.dec", "vae.w_h0", "vae.b_h0", "vae.w_out", "vae.b_out"][..], "decoder"),
    ] {
        check_component(&mut vae, prefixes, &mut vae_loss, &mut rng, 5, label);
    }

    // Patch critic under mean score.
    let critic_cfg = PatchConfig { k: 10, m: 2, ..PatchConfig::default() };
    let mut critic = Critic::patch(critic_cfg, &mut rng).unwrap();
    jitter(&mut critic, &mut rng);
    {
        let fwd = critic.forward(&features).unwrap();
        critic.zero_grads();
        let p = fwd.scores().len();
        let d_scores = Array1::from_elem(p, 1.0 / p as f64);
        critic.backward_scores(&fwd, &d_scores);
    }
    let mut critic_loss = {
        let features = features.clone();
        move |c: &Critic| {
            let fwd = c.forward(&features).unwrap();
            let s = fwd.scores();
            s.sum() / s.len() as f64
        }
    };
    check_component(&mut critic, &["critic."], &mut critic_loss, &mut rng, 5, "patch critic");

    report(5, "gradient correctness", started, Duration::from_secs(60));
}

// ---------------------------------------------------------------- criterion 6

fn smoke_synth(seed: u64) -> Vec<(VideoRecord, FrameDetections)> {
    generate_synthetic_with(&SynthOptions {
        n_videos: 3,
        t_range: (12, 18),
        n_users: 3,
        entity_rate: 0.8,
        seed,
        d_scene: 16,
        d_entity: 6,
    })
    .unwrap()
}

fn smoke_configs(epochs: usize, seed: u64) -> (SummarizerConfig, VaeConfig, PatchConfig, TrainConfig) {
    let sum_cfg = SummarizerConfig {
        d_entity: 6,
        d_scene: 16,
        gcn_hidden: 8,
        gcn_layers: 3,
        mlp_hidden: 12,
        ..SummarizerConfig::default()
    };
    let vae_cfg = VaeConfig { d_input: 16, d_hidden: 10, d_latent: 8, seed };
    let critic_cfg = PatchConfig { k: 16, m: 1, ..PatchConfig::default() };
    let train = TrainConfig { epochs, seed, ..TrainConfig::default() };
    (sum_cfg, vae_cfg, critic_cfg, train)
}

/// The 12-epoch smoke fit shared by criteria 6 and 8.
fn run_smoke_fit(out_dir: &std::path::Path) -> era::training::FitResult {
    let items = smoke_synth(31);
    let (sum_cfg, vae_cfg, critic_cfg, train) = smoke_configs(12, 31);
    fit(&items, &sum_cfg, &vae_cfg, &critic_cfg, &train, out_dir, None).unwrap()
}

#[test]
fn criterion_6_training_smoke_and_schedule() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let result = run_smoke_fit(&tmp.path().join("run"));
    assert_eq!(result.epochs_run, 12);

    // Every logged term is finite and epoch 11 runs at the decayed rate.
    let log = std::fs::read_to_string(&result.log_path).unwrap();
    let mut epoch11 = 0usize;
    let mut records = 0usize;
    for line in log.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        records += 1;
        for (term, value) in rec["terms"].as_object().unwrap() {
            let v = value.as_f64().unwrap();
            assert!(v.is_finite(), "term {term} is not finite: {v}");
        }
        let lr = rec["lr"].as_f64().unwrap();
        if rec["epoch"].as_u64().unwrap() == 11 {
            epoch11 += 1;
            assert!((lr - 1e-5).abs() <= 1e-9 * 1e-5, "epoch 11 lr {lr} is not 1e-5");
        }
    }
    assert_eq!(records, 12 * 3, "one record per video per epoch");
    assert_eq!(epoch11, 3, "all three videos logged at epoch 11");

    // Reconstruction halves within 200 generator-only steps on one video.
    let items = smoke_synth(11);
    let (sum_cfg, mut vae_cfg, critic_cfg, mut train) = smoke_configs(12, 11);
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
    let mut rng = substream(11, "acceptance/recon");
    let mut first = f64::NAN;
    let mut last = f64::NAN;
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
        "reconstruction {first} -> {last}; expected at least a 50% drop"
    );

    report(6, "training smoke and schedule", started, Duration::from_secs(300));
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_end_to_end_protocol() {
    let started = Instant::now();
    let items = generate_synthetic_with(&SynthOptions {
        n_videos: 20,
        t_range: (10, 14),
        n_users: 4,
        entity_rate: 0.7,
        seed: 71,
        d_scene: 12,
        d_entity: 5,
    })
    .unwrap();
    let ids: Vec<String> = items.iter().map(|(r, _)| r.video_id.clone()).collect();
    let split = generate_splits(&ids, 5, SplitMode::NonOverlapping, 71).unwrap();

    // Partition property: every video sits in exactly one test fold.
    for id in &ids {
        let n = split
            .folds
            .iter()
            .filter(|fold| fold.test_keys.contains(id))
            .count();
        assert_eq!(n, 1, "video {id} appears in {n} test folds");
    }

    // Directional comparison: the full 5-fold protocol (train on each fold's
    // 16 videos, score its 4 held-out videos) against the seeded random
    // baseline, repeated for three training seeds.
    let tmp = tempfile::tempdir().unwrap();
    let mut trained_means = Vec::new();
    let mut random_means = Vec::new();
    for seed in [0u64, 1, 2] {
        let sum_cfg = SummarizerConfig {
            d_entity: 5,
            d_scene: 12,
            gcn_hidden: 6,
            gcn_layers: 2,
            mlp_hidden: 8,
            ..SummarizerConfig::default()
        };
        let vae_cfg = VaeConfig { d_input: 12, d_hidden: 32, d_latent: 16, seed };
        let critic_cfg = PatchConfig { k: 12, m: 1, ..PatchConfig::default() };
        // Desk-scale recipe: the downward score-sum pressure swamps the
        // reconstruction signal on tiny videos, and the default lr decay
        // freezes joint training before the VAE's frame preference emerges,
        // so this protocol trains longer at a constant rate with the
        // regularizers turned down.
        let train = TrainConfig {
            epochs: 100,
            lr: 3e-3,
            lr_decay_epoch: 100,
            seed,
            loss_weights: LossWeights {
                recon: 1.0,
                prior: 0.01,
                sparsity: 0.1,
                score_sum: 0.0,
                adversarial: 1.0,
            },
            ..TrainConfig::default()
        };

        let mut trained_sum = 0.0;
        let mut random_sum = 0.0;
        for (f, fold) in split.folds.iter().enumerate() {
            let train_items: Vec<(VideoRecord, FrameDetections)> = items
                .iter()
                .filter(|(r, _)| fold.train_keys.contains(&r.video_id))
                .cloned()
                .collect();
            let test_items: Vec<&(VideoRecord, FrameDetections)> = items
                .iter()
                .filter(|(r, _)| fold.test_keys.contains(&r.video_id))
                .collect();
            assert_eq!(train_items.len(), 16);
            assert_eq!(test_items.len(), 4);

            let out = tmp.path().join(format!("seed{seed}/fold{f}"));
            let result =
                fit(&train_items, &sum_cfg, &vae_cfg, &critic_cfg, &train, &out, None).unwrap();
            let (models, _) = era::training::models_from_checkpoint(&result.last_path).unwrap();

            for (record, dets) in &test_items {
                let scores = machine_frame_scores(&models, record, dets).unwrap();
                let (f_avg, _) = evaluate_video(record, &scores, ValueMode::Mean).unwrap();
                trained_sum += f_avg;

                let baseline = random_baseline_scores(record, seed);
                let (rf_avg, _) = evaluate_video(record, &baseline, ValueMode::Mean).unwrap();
                random_sum += rf_avg;
            }
        }
        trained_means.push(trained_sum / ids.len() as f64);
        random_means.push(random_sum / ids.len() as f64);
    }
    let trained = trained_means.iter().sum::<f64>() / 3.0;
    let random = random_means.iter().sum::<f64>() / 3.0;
    println!(
        "criterion 7 detail: trained mean f_avg {trained:.4} (per seed {trained_means:.4?}), \
         random baseline {random:.4} (per seed {random_means:.4?})"
    );
    assert!(
        trained > random,
        "trained mean f_avg {trained:.4} does not exceed the random baseline {random:.4}"
    );

    report(7, "end-to-end protocol", started, Duration::from_secs(900));
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_determinism() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let a = run_smoke_fit(&tmp.path().join("a"));
    let b = run_smoke_fit(&tmp.path().join("b"));
    for (name, pa, pb) in [
        ("training log", &a.log_path, &b.log_path),
        ("best checkpoint", &a.best_path, &b.best_path),
        ("last checkpoint", &a.last_path, &b.last_path),
    ] {
        let da = file_digest(pa).unwrap();
        let db = file_digest(pb).unwrap();
        assert_eq!(da, db, "{name} digests differ between identical runs");
    }
    report(8, "determinism", started, Duration::from_secs(600));
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_9_ablation_grid() {
    let started = Instant::now();
    let items = smoke_synth(91);
    let tmp = tempfile::tempdir().unwrap();
    for bits in 0..32u32 {
        let toggles = Toggles {
            use_stgcn: bits & 1 != 0,
            use_diff_attention: bits & 2 != 0,
            use_wgan: bits & 4 != 0,
            use_patch: bits & 8 != 0,
            use_score_sum: bits & 16 != 0,
        };
        let (sum_cfg, vae_cfg, mut critic_cfg, mut train) = smoke_configs(1, 91);
        // Exercise both critic loss conventions across the grid.
        critic_cfg.loss_mode = if bits % 2 == 0 { LossMode::Standard } else { LossMode::Paper };
        train.epochs = 1;
        train.toggles = toggles;
        let out = tmp.path().join(format!("combo{bits:02}"));
        let result = fit(&items, &sum_cfg, &vae_cfg, &critic_cfg, &train, &out, None)
            .unwrap_or_else(|e| panic!("toggle combo {bits:05b} failed: {e}"));
        assert_eq!(result.epochs_run, 1, "combo {bits:05b}");
    }
    report(9, "ablation grid", started, Duration::from_secs(300));
}
