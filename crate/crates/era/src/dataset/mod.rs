//! Data model for benchmark videos: scene features, shot structure, user
//! summaries, per-frame entity detections, and cross-validation splits.
//!
//! All frame counts distinguish the original video timeline (`n_frames_original`,
//! where shots and user summaries live) from the downsampled timeline (`T_d`
//! rows of scene features, one per picked frame).

pub mod container;
pub mod splits;
pub mod synthetic;

use crate::error::{validation, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// One benchmark video: per-downsampled-frame scene features plus the
/// original-timeline annotations used by the evaluation protocol.
#[derive(Debug, Clone)]
pub struct VideoRecord {
    pub video_id: String,
    /// `T_d × D_s` scene features (one row per downsampled frame).
    pub scene_features: Array2<f64>,
    pub n_frames_original: usize,
    /// Original-frame index of each downsampled frame, strictly increasing.
    pub picks: Vec<usize>,
    /// Inclusive `[start, end]` shot boundaries partitioning the original timeline.
    pub change_points: Vec<(usize, usize)>,
    /// `n_users × n_frames_original`, entries in {0, 1}.
    pub user_summaries: Array2<u8>,
    /// Diagnostics only; never used for training.
    pub ground_truth_scores: Option<Vec<f64>>,
}

impl VideoRecord {
    pub fn t_downsampled(&self) -> usize {
        self.scene_features.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.user_summaries.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.video_id;
        let t_d = self.scene_features.nrows();
        if t_d == 0 {
            return Err(validation(id, "scene_features has zero rows"));
        }
        if !self.scene_features.iter().all(|v| v.is_finite()) {
            return Err(validation(id, "scene_features contains non-finite values"));
        }
        if self.picks.len() != t_d {
            return Err(validation(
                id,
                format!("picks length {} != scene_features rows {}", self.picks.len(), t_d),
            ));
        }
        for w in self.picks.windows(2) {
            if w[1] <= w[0] {
                return Err(validation(id, format!("picks not strictly increasing at {} -> {}", w[0], w[1])));
            }
        }
        if let Some(&last) = self.picks.last() {
            if last >= self.n_frames_original {
                return Err(validation(
                    id,
                    format!("pick {} out of range (n_frames_original {})", last, self.n_frames_original),
                ));
            }
        }
        if self.change_points.is_empty() {
            return Err(validation(id, "change_points is empty"));
        }
        let mut expect_start = 0usize;
        for &(start, end) in &self.change_points {
            if start != expect_start {
                return Err(validation(
                    id,
                    format!("change_points gap or overlap: shot starts at {start}, expected {expect_start}"),
                ));
            }
            if end < start {
                return Err(validation(id, format!("change_point ({start},{end}) has end < start")));
            }
            expect_start = end + 1;
        }
        if expect_start != self.n_frames_original {
            return Err(validation(
                id,
                format!(
                    "change_points cover [0,{}) but video has {} frames",
                    expect_start, self.n_frames_original
                ),
            ));
        }
        if self.user_summaries.ncols() != self.n_frames_original {
            return Err(validation(
                id,
                format!(
                    "user_summaries has {} columns, expected n_frames_original {}",
                    self.user_summaries.ncols(),
                    self.n_frames_original
                ),
            ));
        }
        if self.user_summaries.nrows() == 0 {
            return Err(validation(id, "user_summaries has zero rows"));
        }
        for (u, row) in self.user_summaries.outer_iter().enumerate() {
            if row.iter().any(|&v| v > 1) {
                return Err(validation(id, format!("user_summaries row {u} has values outside {{0,1}}")));
            }
            if row.iter().all(|&v| v == 0) {
                return Err(validation(id, format!("user_summaries row {u} selects no frames")));
            }
        }
        if let Some(gt) = &self.ground_truth_scores {
            if gt.len() != t_d {
                return Err(validation(
                    id,
                    format!("ground_truth_scores length {} != T_d {}", gt.len(), t_d),
                ));
            }
            if !gt.iter().all(|v| v.is_finite()) {
                return Err(validation(id, "ground_truth_scores contains non-finite values"));
            }
        }
        Ok(())
    }
}

/// Entities detected in one downsampled frame.
#[derive(Debug, Clone)]
pub struct FrameEntities {
    /// `N_t × 4` boxes in (x1, y1, x2, y2) pixel coordinates.
    pub boxes: Array2<f64>,
    /// `N_t × D_o` entity feature vectors, row-aligned with `boxes`.
    pub features: Array2<f64>,
}

impl FrameEntities {
    pub fn empty(d_entity: usize) -> Self {
        FrameEntities {
            boxes: Array2::zeros((0, 4)),
            features: Array2::zeros((0, d_entity)),
        }
    }

    pub fn n_entities(&self) -> usize {
        self.boxes.nrows()
    }
}

/// Per-video entity detections, one entry per downsampled frame.
#[derive(Debug, Clone)]
pub struct FrameDetections {
    pub frames: Vec<FrameEntities>,
    /// Entity feature dimensionality D_o, uniform across frames.
    pub d_entity: usize,
}

impl FrameDetections {
    /// A detection-free video (every frame has N_t = 0).
    pub fn empty(t_downsampled: usize, d_entity: usize) -> Self {
        FrameDetections {
            frames: (0..t_downsampled).map(|_| FrameEntities::empty(d_entity)).collect(),
            d_entity,
        }
    }

    pub fn t_downsampled(&self) -> usize {
        self.frames.len()
    }

    pub fn total_entities(&self) -> usize {
        self.frames.iter().map(|f| f.n_entities()).sum()
    }

    pub fn validate(&self, video_id: &str) -> Result<()> {
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.boxes.ncols() != 4 {
                return Err(validation(video_id, format!("frame {t}: boxes must have 4 columns")));
            }
            if frame.features.nrows() != frame.boxes.nrows() {
                return Err(validation(
                    video_id,
                    format!(
                        "frame {t}: {} boxes but {} feature rows",
                        frame.boxes.nrows(),
                        frame.features.nrows()
                    ),
                ));
            }
            if frame.features.ncols() != self.d_entity {
                return Err(validation(
                    video_id,
                    format!(
                        "frame {t}: feature dim {} != dataset d_entity {}",
                        frame.features.ncols(),
                        self.d_entity
                    ),
                ));
            }
            if !frame.boxes.iter().all(|v| v.is_finite()) || !frame.features.iter().all(|v| v.is_finite()) {
                return Err(validation(video_id, format!("frame {t}: non-finite detection values")));
            }
            for (i, b) in frame.boxes.outer_iter().enumerate() {
                if b[0] >= b[2] || b[1] >= b[3] {
                    return Err(validation(
                        video_id,
                        format!("frame {t} box {i}: degenerate extent ({},{},{},{})", b[0], b[1], b[2], b[3]),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Check that a record and its detections describe the same downsampled timeline.
pub fn validate_video(record: &VideoRecord, dets: &FrameDetections) -> Result<()> {
    record.validate()?;
    dets.validate(&record.video_id)?;
    if dets.t_downsampled() != record.t_downsampled() {
        return Err(validation(
            &record.video_id,
            format!(
                "detections cover {} frames but video has {} downsampled frames",
                dets.t_downsampled(),
                record.t_downsampled()
            ),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Overlapping,
    NonOverlapping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_keys: Vec<String>,
    pub test_keys: Vec<String>,
}

/// A set of cross-validation folds over video ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSet {
    pub folds: Vec<Fold>,
    pub mode: SplitMode,
    pub seed: u64,
}
