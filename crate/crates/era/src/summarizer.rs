//! The frame scorer: GCN over the spatio-temporal graph, temporal pooling,
//! scene-feature fusion MLP, and difference attention.
//!
//! Two score branches are averaged. `s_star` comes from an MLP over the
//! concatenation of scene features with pooled graph embeddings; `s_diff`
//! comes from an MLP over first-order scene-feature differences. Ablation
//! toggles drop the graph contribution (`use_stgcn = false` zeroes the pooled
//! embeddings) or the difference branch (`use_diff_attention = false` removes
//! it from the average).

use crate::dataset::{FrameDetections, VideoRecord};
use crate::error::{EraError, Result};
use crate::nn::{relu, relu_mask, sigmoid, Param, ParamSet};
use crate::rng::substream;
use crate::stgraph::{assemble_adjacency, SpatioTemporalAdjacency};
use ndarray::{concatenate, Array1, Array2, Axis};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SummarizerConfig {
    /// Entity feature dimensionality D_o (0 for detection-free datasets).
    pub d_entity: usize,
    /// Scene feature dimensionality D_s.
    pub d_scene: usize,
    pub gcn_hidden: usize,
    pub gcn_layers: usize,
    pub mlp_hidden: usize,
    pub use_stgcn: bool,
    pub use_diff_attention: bool,
    /// Reserved for multi-stride difference attention; only stride 1 is implemented.
    pub diff_strides: Vec<usize>,
    pub seed: u64,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        SummarizerConfig {
            d_entity: 256,
            d_scene: 1024,
            gcn_hidden: 128,
            gcn_layers: 3,
            mlp_hidden: 512,
            use_stgcn: true,
            use_diff_attention: true,
            diff_strides: vec![1],
            seed: 0,
        }
    }
}

impl SummarizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gcn_layers < 1 {
            return Err(EraError::InvalidArgument("gcn_layers must be >= 1".into()));
        }
        if self.d_scene == 0 || self.gcn_hidden == 0 || self.mlp_hidden == 0 {
            return Err(EraError::InvalidArgument("summarizer dims must be positive".into()));
        }
        if self.diff_strides != [1] {
            return Err(EraError::InvalidArgument(
                "only diff_strides = [1] is implemented".into(),
            ));
        }
        Ok(())
    }
}

/// Per-frame importance scores, all strictly inside (0, 1).
#[derive(Debug, Clone)]
pub struct FrameScores {
    pub s_star: Array1<f64>,
    pub s_diff: Array1<f64>,
    pub s_final: Array1<f64>,
}

/// Average of the enabled branches.
pub fn combine_scores(s_star: &Array1<f64>, s_diff: &Array1<f64>, use_diff_attention: bool) -> Array1<f64> {
    if use_diff_attention {
        (s_star + s_diff) * 0.5
    } else {
        s_star.clone()
    }
}

#[derive(Debug, Clone)]
pub struct Summarizer {
    pub cfg: SummarizerConfig,
    /// GCN layer weights; layer 0 maps d_entity -> gcn_hidden.
    gcn_w: Vec<Param>,
    /// Shortcut projections; None = identity (dimensions already match).
    gcn_proj: Vec<Option<Param>>,
    fuse_w1: Param,
    fuse_b1: Param,
    fuse_w2: Param,
    fuse_b2: Param,
    diff_w1: Param,
    diff_b1: Param,
    diff_w2: Param,
    diff_b2: Param,
}

/// Activations saved by [`Summarizer::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct SummarizerCache {
    /// Layer inputs H^0..H^{L-1} plus the final embeddings at index L.
    gcn_hs: Vec<Array2<f64>>,
    /// Pre-ReLU message term E·H·W per layer.
    gcn_pre: Vec<Array2<f64>>,
    /// E·H per layer (needed for dW).
    gcn_eh: Vec<Array2<f64>>,
    fused: Array2<f64>,
    fuse_pre: Array2<f64>,
    fuse_hidden: Array2<f64>,
    diffs: Array2<f64>,
    diff_pre: Array2<f64>,
    diff_hidden: Array2<f64>,
    pub scores: FrameScores,
}

impl Summarizer {
    pub fn new(cfg: SummarizerConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = substream(cfg.seed, "summarizer");
        let mut gcn_w = Vec::with_capacity(cfg.gcn_layers);
        let mut gcn_proj = Vec::with_capacity(cfg.gcn_layers);
        for l in 0..cfg.gcn_layers {
            let d_in = if l == 0 { cfg.d_entity } else { cfg.gcn_hidden };
            gcn_w.push(Param::glorot(d_in, cfg.gcn_hidden, &mut rng));
            gcn_proj.push(if d_in == cfg.gcn_hidden {
                None
            } else {
                Some(Param::glorot(d_in, cfg.gcn_hidden, &mut rng))
            });
        }
        let d_fused = cfg.d_scene + cfg.gcn_hidden;
        Ok(Summarizer {
            fuse_w1: Param::glorot(d_fused, cfg.mlp_hidden, &mut rng),
            fuse_b1: Param::zeros(1, cfg.mlp_hidden),
            fuse_w2: Param::glorot(cfg.mlp_hidden, 1, &mut rng),
            fuse_b2: Param::zeros(1, 1),
            diff_w1: Param::glorot(cfg.d_scene, cfg.mlp_hidden, &mut rng),
            diff_b1: Param::zeros(1, cfg.mlp_hidden),
            diff_w2: Param::glorot(cfg.mlp_hidden, 1, &mut rng),
            diff_b2: Param::zeros(1, 1),
            cfg,
            gcn_w,
            gcn_proj,
        })
    }

    /// GCN layer rule H^{l+1} = ReLU(E·H^l·W^l) + P(H^l), applied `gcn_layers` times.
    pub fn gcn_forward(&self, adj: &SpatioTemporalAdjacency) -> Array2<f64> {
        self.run_gcn(adj).0
    }

    fn run_gcn(&self, adj: &SpatioTemporalAdjacency) -> (Array2<f64>, Vec<Array2<f64>>, Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut hs = vec![adj.node_features.clone()];
        let mut pres = Vec::with_capacity(self.cfg.gcn_layers);
        let mut ehs = Vec::with_capacity(self.cfg.gcn_layers);
        for l in 0..self.cfg.gcn_layers {
            let h = &hs[l];
            let eh = adj.matrix.matmul(&h.view());
            let pre = eh.dot(&self.gcn_w[l].value);
            let mut next = relu(&pre);
            match &self.gcn_proj[l] {
                Some(p) => next += &h.dot(&p.value),
                None => next += h,
            }
            ehs.push(eh);
            pres.push(pre);
            hs.push(next);
        }
        let out = hs.last().unwrap().clone();
        (out, hs, pres, ehs)
    }

    pub fn forward(&self, scene_features: &Array2<f64>, adj: &SpatioTemporalAdjacency) -> Result<SummarizerCache> {
        let t_d = scene_features.nrows();
        if scene_features.ncols() != self.cfg.d_scene {
            return Err(EraError::ShapeMismatch(format!(
                "scene features have dim {}, summarizer expects {}",
                scene_features.ncols(),
                self.cfg.d_scene
            )));
        }
        if adj.t_downsampled() != t_d {
            return Err(EraError::ShapeMismatch(format!(
                "adjacency covers {} frames, scene features {}",
                adj.t_downsampled(),
                t_d
            )));
        }
        if adj.node_features.ncols() != self.cfg.d_entity {
            return Err(EraError::ShapeMismatch(format!(
                "node features have dim {}, summarizer expects {}",
                adj.node_features.ncols(),
                self.cfg.d_entity
            )));
        }

        let (gcn_hs, gcn_pre, gcn_eh, f_o) = if self.cfg.use_stgcn {
            let (emb, hs, pres, ehs) = self.run_gcn(adj);
            (hs, pres, ehs, temporal_pool(&emb, &adj.frame_offsets))
        } else {
            (Vec::new(), Vec::new(), Vec::new(), Array2::zeros((t_d, self.cfg.gcn_hidden)))
        };

        let fused = concatenate![Axis(1), scene_features.view(), f_o.view()];
        let fuse_pre = fused.dot(&self.fuse_w1.value) + &self.fuse_b1.value;
        let fuse_hidden = relu(&fuse_pre);
        let star_logit = fuse_hidden.dot(&self.fuse_w2.value) + &self.fuse_b2.value;
        let s_star = Array1::from_iter(star_logit.column(0).iter().map(|&v| sigmoid(v)));

        let mut diffs = Array2::zeros((t_d, self.cfg.d_scene));
        for t in 1..t_d {
            let d = &scene_features.row(t) - &scene_features.row(t - 1);
            diffs.row_mut(t).assign(&d);
        }
        let diff_pre = diffs.dot(&self.diff_w1.value) + &self.diff_b1.value;
        let diff_hidden = relu(&diff_pre);
        let diff_logit = diff_hidden.dot(&self.diff_w2.value) + &self.diff_b2.value;
        let s_diff = Array1::from_iter(diff_logit.column(0).iter().map(|&v| sigmoid(v)));

        let s_final = combine_scores(&s_star, &s_diff, self.cfg.use_diff_attention);
        Ok(SummarizerCache {
            gcn_hs,
            gcn_pre,
            gcn_eh,
            fused,
            fuse_pre,
            fuse_hidden,
            diffs,
            diff_pre,
            diff_hidden,
            scores: FrameScores { s_star, s_diff, s_final },
        })
    }

    /// Score one video end to end (assembles the graph internally).
    pub fn summarize(&self, record: &VideoRecord, dets: &FrameDetections) -> Result<FrameScores> {
        let adj = assemble_adjacency(dets)?;
        Ok(self.forward(&record.scene_features, &adj)?.scores)
    }

    /// Accumulate parameter gradients for a loss whose gradient w.r.t.
    /// `s_final` is `d_final`.
    pub fn backward(&mut self, adj: &SpatioTemporalAdjacency, cache: &SummarizerCache, d_final: &Array1<f64>) {
        let t_d = d_final.len();
        let (d_star, d_diff) = if self.cfg.use_diff_attention {
            (d_final * 0.5, d_final * 0.5)
        } else {
            (d_final.clone(), Array1::zeros(t_d))
        };

        // Star branch MLP.
        let s_star = &cache.scores.s_star;
        let mut d_logit = Array2::zeros((t_d, 1));
        for t in 0..t_d {
            d_logit[[t, 0]] = d_star[t] * s_star[t] * (1.0 - s_star[t]);
        }
        self.fuse_w2.grad += &cache.fuse_hidden.t().dot(&d_logit);
        self.fuse_b2.grad[[0, 0]] += d_logit.sum();
        let d_hidden = d_logit.dot(&self.fuse_w2.value.t());
        let d_pre = &d_hidden * &relu_mask(&cache.fuse_pre);
        self.fuse_w1.grad += &cache.fused.t().dot(&d_pre);
        self.fuse_b1.grad += &d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_fused = d_pre.dot(&self.fuse_w1.value.t());

        // Graph branch: unpool the F_o slice and walk the GCN backwards.
        if self.cfg.use_stgcn && !cache.gcn_hs.is_empty() {
            let d_scene = self.cfg.d_scene;
            let offs = &adj.frame_offsets;
            let n_nodes = adj.n_nodes();
            if n_nodes > 0 {
                let mut d_h = Array2::zeros((n_nodes, self.cfg.gcn_hidden));
                for t in 0..t_d {
                    let (a, b) = (offs[t], offs[t + 1]);
                    if a == b {
                        continue;
                    }
                    let inv = 1.0 / (b - a) as f64;
                    for node in a..b {
                        for k in 0..self.cfg.gcn_hidden {
                            d_h[[node, k]] = d_fused[[t, d_scene + k]] * inv;
                        }
                    }
                }
                for l in (0..self.cfg.gcn_layers).rev() {
                    let d_m = &d_h * &relu_mask(&cache.gcn_pre[l]);
                    self.gcn_w[l].grad += &cache.gcn_eh[l].t().dot(&d_m);
                    let d_eh = d_m.dot(&self.gcn_w[l].value.t());
                    let mut d_prev = adj.matrix.matmul_t(&d_eh.view());
                    match &mut self.gcn_proj[l] {
                        Some(p) => {
                            p.grad += &cache.gcn_hs[l].t().dot(&d_h);
                            d_prev += &d_h.dot(&p.value.t());
                        }
                        None => d_prev += &d_h,
                    }
                    d_h = d_prev;
                }
            }
        }

        // Difference branch MLP (stops at the diffs; scene features are inputs).
        let s_diff = &cache.scores.s_diff;
        let mut d_logit = Array2::zeros((t_d, 1));
        for t in 0..t_d {
            d_logit[[t, 0]] = d_diff[t] * s_diff[t] * (1.0 - s_diff[t]);
        }
        self.diff_w2.grad += &cache.diff_hidden.t().dot(&d_logit);
        self.diff_b2.grad[[0, 0]] += d_logit.sum();
        let d_hidden = d_logit.dot(&self.diff_w2.value.t());
        let d_pre = &d_hidden * &relu_mask(&cache.diff_pre);
        self.diff_w1.grad += &cache.diffs.t().dot(&d_pre);
        self.diff_b1.grad += &d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
}

/// Mean-pool node embeddings per frame; empty frames give zero rows.
pub fn temporal_pool(embeddings: &Array2<f64>, frame_offsets: &[usize]) -> Array2<f64> {
    let t_d = frame_offsets.len() - 1;
    let dim = embeddings.ncols();
    let mut out = Array2::zeros((t_d, dim));
    for t in 0..t_d {
        let (a, b) = (frame_offsets[t], frame_offsets[t + 1]);
        if a == b {
            continue;
        }
        let mut acc = out.row_mut(t);
        for node in a..b {
            acc.scaled_add(1.0, &embeddings.row(node));
        }
        let inv = 1.0 / (b - a) as f64;
        acc.map_inplace(|v| *v *= inv);
    }
    out
}

impl ParamSet for Summarizer {
    fn visit(&self, f: &mut dyn FnMut(&str, &Param)) {
        for (l, w) in self.gcn_w.iter().enumerate() {
            f(&format!("gcn.w{l}"), w);
        }
        for (l, p) in self.gcn_proj.iter().enumerate() {
            if let Some(p) = p {
                f(&format!("gcn.proj{l}"), p);
            }
        }
        f("fuse.w1", &self.fuse_w1);
        f("fuse.b1", &self.fuse_b1);
        f("fuse.w2", &self.fuse_w2);
        f("fuse.b2", &self.fuse_b2);
        f("diff.w1", &self.diff_w1);
        f("diff.b1", &self.diff_b1);
        f("diff.w2", &self.diff_w2);
        f("diff.b2", &self.diff_b2);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Param)) {
        for (l, w) in self.gcn_w.iter_mut().enumerate() {
            f(&format!("gcn.w{l}"), w);
        }
        for (l, p) in self.gcn_proj.iter_mut().enumerate() {
            if let Some(p) = p {
                f(&format!("gcn.proj{l}"), p);
            }
        }
        f("fuse.w1", &mut self.fuse_w1);
        f("fuse.b1", &mut self.fuse_b1);
        f("fuse.w2", &mut self.fuse_w2);
        f("fuse.b2", &mut self.fuse_b2);
        f("diff.w1", &mut self.diff_w1);
        f("diff.b1", &mut self.diff_b1);
        f("diff.w2", &mut self.diff_w2);
        f("diff.b2", &mut self.diff_b2);
    }
}
