//! Spatio-temporal entity graph.
//!
//! Within a frame, entities are connected by softmax-normalized IOU (the
//! spatial graph). Across adjacent frames, entities are connected by
//! softmax-normalized cosine similarity of their features (the temporal
//! graph). The combined adjacency is block-structured: spatial blocks on the
//! diagonal, temporal blocks on the first superdiagonal, zeros elsewhere.
//! Rows are already normalized by the softmaxes, so the matrix is used as-is
//! (no symmetrization, no degree normalization).

use crate::dataset::FrameDetections;
use crate::error::{EraError, Result};
use crate::nn::softmax_row;
use ndarray::{Array2, ArrayView1, ArrayView2};
use std::io::Write;

/// Sparse matrix in coordinate-list form. Entries are kept sorted by
/// (row, col) and duplicates are forbidden by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoo {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseCoo {
    pub fn new(rows: usize, cols: usize) -> Self {
        SparseCoo { rows, cols, entries: Vec::new() }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Dense `self · h` where `h` is `cols × f`.
    pub fn matmul(&self, h: &ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(h.nrows(), self.cols, "spmm shape mismatch");
        let mut out = Array2::zeros((self.rows, h.ncols()));
        for &(r, c, v) in &self.entries {
            let src = h.row(c);
            let mut dst = out.row_mut(r);
            dst.scaled_add(v, &src);
        }
        out
    }

    /// Dense `selfᵀ · h`, the adjoint of [`SparseCoo::matmul`].
    pub fn matmul_t(&self, h: &ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(h.nrows(), self.rows, "spmm_t shape mismatch");
        let mut out = Array2::zeros((self.cols, h.ncols()));
        for &(r, c, v) in &self.entries {
            let src = h.row(r);
            let mut dst = out.row_mut(c);
            dst.scaled_add(v, &src);
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for &(r, c, v) in &self.entries {
            out[[r, c]] = v;
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.rows];
        for &(r, _, v) in &self.entries {
            sums[r] += v;
        }
        sums
    }

    /// Debug export, one `row col value` line per entry.
    pub fn export_text(&self, mut w: impl Write) -> std::io::Result<()> {
        for &(r, c, v) in &self.entries {
            writeln!(w, "{r} {c} {v}")?;
        }
        Ok(())
    }
}

/// The assembled graph: block adjacency, per-frame node ranges, and the
/// row-stacked entity features the GCN consumes.
#[derive(Debug, Clone)]
pub struct SpatioTemporalAdjacency {
    pub matrix: SparseCoo,
    /// Frame `t` owns nodes `[frame_offsets[t], frame_offsets[t+1])`; length `T_d + 1`.
    pub frame_offsets: Vec<usize>,
    /// `N_total × D_o`.
    pub node_features: Array2<f64>,
}

impl SpatioTemporalAdjacency {
    pub fn n_nodes(&self) -> usize {
        self.matrix.rows
    }

    pub fn t_downsampled(&self) -> usize {
        self.frame_offsets.len() - 1
    }
}

fn check_box(b: &ArrayView1<f64>) -> Result<()> {
    if b.len() != 4 {
        return Err(EraError::InvalidArgument(format!("box must have 4 coordinates, got {}", b.len())));
    }
    if !(b[0] < b[2] && b[1] < b[3]) {
        return Err(EraError::InvalidArgument(format!(
            "degenerate box ({}, {}, {}, {})",
            b[0], b[1], b[2], b[3]
        )));
    }
    Ok(())
}

/// Intersection over union of two (x1, y1, x2, y2) boxes.
pub fn iou(box_a: &ArrayView1<f64>, box_b: &ArrayView1<f64>) -> Result<f64> {
    check_box(box_a)?;
    check_box(box_b)?;
    let ix = (box_a[2].min(box_b[2]) - box_a[0].max(box_b[0])).max(0.0);
    let iy = (box_a[3].min(box_b[3]) - box_a[1].max(box_b[1])).max(0.0);
    let inter = ix * iy;
    let area_a = (box_a[2] - box_a[0]) * (box_a[3] - box_a[1]);
    let area_b = (box_b[2] - box_b[0]) * (box_b[3] - box_b[1]);
    Ok(inter / (area_a + area_b - inter))
}

/// Spatial block for one frame: row `i` is the softmax over `j` of
/// IOU(box_i, box_j), with the self-term IOU = 1 included.
pub fn build_spatial_block(boxes: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = boxes.nrows();
    if n == 0 {
        return Err(EraError::InvalidArgument("spatial block needs at least one box".into()));
    }
    let mut sim = Array2::zeros((n, n));
    for i in 0..n {
        sim[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let v = iou(&boxes.row(i), &boxes.row(j))?;
            sim[[i, j]] = v;
            sim[[j, i]] = v;
        }
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let row = softmax_row(sim.row(i).as_slice().unwrap());
        for j in 0..n {
            out[[i, j]] = row[j];
        }
    }
    Ok(out)
}

/// Cosine similarity with the zero-norm guard: an all-zero row is treated as
/// the vector `(1e-8, 0, ..)` so the cosine stays defined.
fn cosine_rows(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> f64 {
    const EPS: f64 = 1e-8;
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    match (na == 0.0, nb == 0.0) {
        (false, false) => a.dot(b) / (na * nb),
        (true, false) => b[0] * EPS / (EPS * nb),
        (false, true) => a[0] * EPS / (na * EPS),
        (true, true) => 1.0,
    }
}

/// Temporal block between adjacent frames: row `i` is the softmax over next-frame
/// entities `j` of cos(feat_i, feat_j).
pub fn build_temporal_block(feats_t: &ArrayView2<f64>, feats_next: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let (n, m) = (feats_t.nrows(), feats_next.nrows());
    if n == 0 || m == 0 {
        return Err(EraError::InvalidArgument("temporal block needs entities on both frames".into()));
    }
    if feats_t.ncols() != feats_next.ncols() {
        return Err(EraError::InvalidArgument(format!(
            "feature dim mismatch across frames: {} vs {}",
            feats_t.ncols(),
            feats_next.ncols()
        )));
    }
    let mut out = Array2::zeros((n, m));
    let mut sims = vec![0.0; m];
    for i in 0..n {
        for (j, s) in sims.iter_mut().enumerate() {
            *s = cosine_rows(&feats_t.row(i), &feats_next.row(j));
        }
        let row = softmax_row(&sims);
        for j in 0..m {
            out[[i, j]] = row[j];
        }
    }
    Ok(out)
}

/// Assemble the block adjacency for a whole video. Frames with no entities
/// contribute no nodes and break the temporal chain (no edge across them).
pub fn assemble_adjacency(dets: &FrameDetections) -> Result<SpatioTemporalAdjacency> {
    let t_d = dets.frames.len();
    let mut frame_offsets = Vec::with_capacity(t_d + 1);
    frame_offsets.push(0usize);
    for frame in &dets.frames {
        frame_offsets.push(frame_offsets.last().unwrap() + frame.n_entities());
    }
    let n_total = *frame_offsets.last().unwrap();
    let mut node_features = Array2::zeros((n_total, dets.d_entity));
    for (t, frame) in dets.frames.iter().enumerate() {
        let off = frame_offsets[t];
        for (i, row) in frame.features.outer_iter().enumerate() {
            node_features.row_mut(off + i).assign(&row);
        }
    }

    let mut matrix = SparseCoo::new(n_total, n_total);
    for (t, frame) in dets.frames.iter().enumerate() {
        let n_t = frame.n_entities();
        if n_t == 0 {
            continue;
        }
        let off = frame_offsets[t];
        let spatial = build_spatial_block(&frame.boxes.view())?;
        for i in 0..n_t {
            for j in 0..n_t {
                matrix.entries.push((off + i, off + j, spatial[[i, j]]));
            }
        }
        if t + 1 < t_d {
            let next = &dets.frames[t + 1];
            if next.n_entities() > 0 {
                let off_next = frame_offsets[t + 1];
                let temporal = build_temporal_block(&frame.features.view(), &next.features.view())?;
                for i in 0..n_t {
                    for j in 0..next.n_entities() {
                        matrix.entries.push((off + i, off_next + j, temporal[[i, j]]));
                    }
                }
            }
        }
    }
    matrix.entries.sort_by_key(|&(r, c, _)| (r, c));
    Ok(SpatioTemporalAdjacency { matrix, frame_offsets, node_features })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FrameEntities;
    use crate::rng::substream;
    use ndarray::{arr1, arr2, Array2};
    use rand::Rng;

    fn box_row(x1: f64, y1: f64, x2: f64, y2: f64) -> ndarray::Array1<f64> {
        arr1(&[x1, y1, x2, y2])
    }

    #[test]
    fn iou_identical_is_one() {
        let a = box_row(2.0, 3.0, 9.0, 11.0);
        assert_eq!(iou(&a.view(), &a.view()).unwrap(), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = box_row(0.0, 0.0, 10.0, 10.0);
        let b = box_row(20.0, 20.0, 30.0, 30.0);
        assert_eq!(iou(&a.view(), &b.view()).unwrap(), 0.0);
    }

    #[test]
    fn iou_half_overlap_matches_pixel_grid() {
        let a = box_row(0.0, 0.0, 10.0, 10.0);
        let b = box_row(5.0, 0.0, 15.0, 10.0);
        let v = iou(&a.view(), &b.view()).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12, "{v}");

        // Brute-force unit-cell count over the integer grid.
        let inside = |bx: &[f64; 4], x: usize, y: usize| {
            (x as f64) >= bx[0] && ((x + 1) as f64) <= bx[2] && (y as f64) >= bx[1] && ((y + 1) as f64) <= bx[3]
        };
        let (mut inter, mut union) = (0usize, 0usize);
        for x in 0..20 {
            for y in 0..20 {
                let ia = inside(&[0.0, 0.0, 10.0, 10.0], x, y);
                let ib = inside(&[5.0, 0.0, 15.0, 10.0], x, y);
                if ia && ib {
                    inter += 1;
                }
                if ia || ib {
                    union += 1;
                }
            }
        }
        assert_eq!((inter, union), (50, 150));
        assert!((v - inter as f64 / union as f64).abs() < 1e-12);
    }

    #[test]
    fn iou_rejects_degenerate_box() {
        let a = box_row(0.0, 0.0, 0.0, 10.0);
        let b = box_row(0.0, 0.0, 1.0, 1.0);
        assert!(iou(&a.view(), &b.view()).is_err());
    }

    #[test]
    fn spatial_singleton_is_one() {
        let boxes = arr2(&[[0.0, 0.0, 4.0, 4.0]]);
        let g = build_spatial_block(&boxes.view()).unwrap();
        assert_eq!(g, arr2(&[[1.0]]));
    }

    #[test]
    fn spatial_identical_boxes_split_evenly() {
        let boxes = arr2(&[[0.0, 0.0, 4.0, 4.0], [0.0, 0.0, 4.0, 4.0]]);
        let g = build_spatial_block(&boxes.view()).unwrap();
        for v in g.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn spatial_matches_softmax_oracle() {
        // IOU row is [1, 1/3] for these boxes.
        let boxes = arr2(&[[0.0, 0.0, 10.0, 10.0], [5.0, 0.0, 15.0, 10.0]]);
        let g = build_spatial_block(&boxes.view()).unwrap();
        let (e1, e2) = (1.0f64.exp(), (1.0f64 / 3.0).exp());
        assert!((g[[0, 0]] - e1 / (e1 + e2)).abs() < 1e-12);
        assert!((g[[0, 1]] - e2 / (e1 + e2)).abs() < 1e-12);
        let sums = g.sum_axis(ndarray::Axis(1));
        for s in sums.iter() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spatial_invariant_to_translation() {
        let mut rng = substream(3, "translate");
        for _ in 0..20 {
            let n = rng.gen_range(1..=4);
            let mut boxes = Array2::zeros((n, 4));
            for mut row in boxes.outer_iter_mut() {
                let x1: f64 = rng.gen_range(0.0..50.0);
                let y1: f64 = rng.gen_range(0.0..50.0);
                row[0] = x1;
                row[1] = y1;
                row[2] = x1 + rng.gen_range(1.0..30.0);
                row[3] = y1 + rng.gen_range(1.0..30.0);
            }
            let (dx, dy): (f64, f64) = (rng.gen_range(-90.0..90.0), rng.gen_range(-90.0..90.0));
            let mut shifted = boxes.clone();
            for mut row in shifted.outer_iter_mut() {
                row[0] += dx;
                row[2] += dx;
                row[1] += dy;
                row[3] += dy;
            }
            let a = build_spatial_block(&boxes.view()).unwrap();
            let b = build_spatial_block(&shifted.view()).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn temporal_singleton_next_gives_ones() {
        let a = arr2(&[[1.0, 2.0], [3.0, -1.0]]);
        let b = arr2(&[[0.5, 0.5]]);
        let g = build_temporal_block(&a.view(), &b.view()).unwrap();
        assert_eq!(g, arr2(&[[1.0], [1.0]]));
    }

    #[test]
    fn temporal_orthogonal_matches_oracle() {
        let a = arr2(&[[1.0, 0.0]]);
        let b = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let g = build_temporal_block(&a.view(), &b.view()).unwrap();
        let e = 1.0f64.exp();
        assert!((g[[0, 0]] - e / (e + 1.0)).abs() < 1e-12);
        assert!((g[[0, 1]] - 1.0 / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn temporal_zero_norm_rows_stay_finite() {
        let a = arr2(&[[0.0, 0.0]]);
        let b = arr2(&[[1.0, 0.0], [0.0, 0.0]]);
        let g = build_temporal_block(&a.view(), &b.view()).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
        let s: f64 = g.row(0).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    fn random_dets(rng: &mut rand_chacha::ChaCha8Rng, t_d: usize, max_n: usize, d_o: usize) -> FrameDetections {
        let frames = (0..t_d)
            .map(|_| {
                let n = rng.gen_range(0..=max_n);
                let mut boxes = Array2::zeros((n, 4));
                for mut row in boxes.outer_iter_mut() {
                    let x1: f64 = rng.gen_range(0.0..100.0);
                    let y1: f64 = rng.gen_range(0.0..100.0);
                    row[0] = x1;
                    row[1] = y1;
                    row[2] = x1 + rng.gen_range(1.0..40.0);
                    row[3] = y1 + rng.gen_range(1.0..40.0);
                }
                let features = Array2::from_shape_fn((n, d_o), |_| rng.gen_range(-1.0..1.0));
                FrameEntities { boxes, features }
            })
            .collect();
        FrameDetections { frames, d_entity: d_o }
    }

    #[test]
    fn assemble_block_layout_t2() {
        let dets = FrameDetections {
            frames: vec![
                FrameEntities {
                    boxes: arr2(&[[0.0, 0.0, 10.0, 10.0], [5.0, 0.0, 15.0, 10.0]]),
                    features: arr2(&[[1.0, 0.0], [0.0, 1.0]]),
                },
                FrameEntities {
                    boxes: arr2(&[[2.0, 2.0, 8.0, 8.0]]),
                    features: arr2(&[[1.0, 1.0]]),
                },
            ],
            d_entity: 2,
        };
        let adj = assemble_adjacency(&dets).unwrap();
        assert_eq!(adj.frame_offsets, vec![0, 2, 3]);
        let dense = adj.matrix.to_dense();
        assert_eq!(dense.dim(), (3, 3));
        // Spatial 2x2 block, temporal column to node 2, spatial [[1]] for frame 1.
        let nonzero: Vec<(usize, usize)> = adj.matrix.entries.iter().map(|&(r, c, _)| (r, c)).collect();
        assert_eq!(nonzero, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 2)]);
        assert_eq!(dense[[2, 2]], 1.0);
        // Temporal block rows are singleton softmaxes.
        assert_eq!(dense[[0, 2]], 1.0);
        assert_eq!(dense[[1, 2]], 1.0);
        // Row sums: frame 0 rows see a successor (2.0), last frame 1.0.
        let sums = adj.matrix.row_sums();
        assert!((sums[0] - 2.0).abs() < 1e-12);
        assert!((sums[1] - 2.0).abs() < 1e-12);
        assert!((sums[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assemble_empty_video_is_0x0() {
        let dets = FrameDetections::empty(4, 8);
        let adj = assemble_adjacency(&dets).unwrap();
        assert_eq!(adj.n_nodes(), 0);
        assert_eq!(adj.frame_offsets, vec![0, 0, 0, 0, 0]);
        assert_eq!(adj.matrix.nnz(), 0);
    }

    #[test]
    fn row_sum_law_holds_on_random_graphs() {
        let mut rng = substream(11, "rowsum");
        for _ in 0..30 {
            let t_d = rng.gen_range(1..=6);
            let dets = random_dets(&mut rng, t_d, 3, 5);
            let adj = assemble_adjacency(&dets).unwrap();
            let sums = adj.matrix.row_sums();
            for t in 0..t_d {
                let has_successor = t + 1 < t_d && dets.frames[t + 1].n_entities() > 0;
                let expect = if has_successor { 2.0 } else { 1.0 };
                for node in adj.frame_offsets[t]..adj.frame_offsets[t + 1] {
                    assert!(
                        (sums[node] - expect).abs() < 1e-12,
                        "frame {t} node {node}: sum {} expected {expect}",
                        sums[node]
                    );
                }
            }
        }
    }

    #[test]
    fn permutation_equivariance_within_frame() {
        let mut rng = substream(13, "perm");
        let dets = random_dets(&mut rng, 3, 3, 4);
        // Find a frame with >= 2 entities; reverse its entities.
        let Some(tgt) = dets.frames.iter().position(|f| f.n_entities() >= 2) else {
            return;
        };
        let mut permuted = dets.clone();
        let n = permuted.frames[tgt].n_entities();
        let perm: Vec<usize> = (0..n).rev().collect();
        let f = &mut permuted.frames[tgt];
        let boxes_orig = f.boxes.clone();
        let feats_orig = f.features.clone();
        for (new_i, &old_i) in perm.iter().enumerate() {
            f.boxes.row_mut(new_i).assign(&boxes_orig.row(old_i));
            f.features.row_mut(new_i).assign(&feats_orig.row(old_i));
        }
        let a = assemble_adjacency(&dets).unwrap().matrix.to_dense();
        let b = assemble_adjacency(&permuted).unwrap().matrix.to_dense();
        let adj = assemble_adjacency(&dets).unwrap();
        let off = adj.frame_offsets[tgt];
        // Global node permutation induced by the in-frame reversal.
        let n_total = a.nrows();
        let map = |i: usize| -> usize {
            if i >= off && i < off + n {
                off + perm.iter().position(|&p| p == i - off).unwrap()
            } else {
                i
            }
        };
        for i in 0..n_total {
            for j in 0..n_total {
                let d = (a[[i, j]] - b[[map(i), map(j)]]).abs();
                assert!(d < 1e-12, "mismatch at ({i},{j}): {d}");
            }
        }
    }

    #[test]
    fn spmm_and_transpose_match_dense() {
        let mut rng = substream(17, "spmm");
        let dets = random_dets(&mut rng, 4, 3, 6);
        let adj = assemble_adjacency(&dets).unwrap();
        let n = adj.n_nodes();
        if n == 0 {
            return;
        }
        let h = Array2::from_shape_fn((n, 5), |_| rng.gen_range(-1.0..1.0));
        let dense = adj.matrix.to_dense();
        let want = dense.dot(&h);
        let got = adj.matrix.matmul(&h.view());
        for (a, b) in want.iter().zip(got.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let want_t = dense.t().dot(&h);
        let got_t = adj.matrix.matmul_t(&h.view());
        for (a, b) in want_t.iter().zip(got_t.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn export_text_lists_entries() {
        let mut m = SparseCoo::new(2, 2);
        m.entries.push((0, 1, 0.25));
        m.entries.push((1, 0, 0.75));
        let mut buf = Vec::new();
        m.export_text(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 1 0.25\n1 0 0.75\n");
    }
}
