//! Key-shot evaluation protocol: expand downsampled scores to original frames,
//! score shots, pick key shots under a 15% knapsack budget, and compare
//! against user summaries with harmonic F-measures, averaged per fold.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::file_digest;
use crate::dataset::{FrameDetections, SplitMode, SplitSet, VideoRecord};
use crate::error::{EraError, Result};
use crate::rng::substream;
use crate::training::{models_from_checkpoint, Models};

/// Fraction of original frames a summary may cover.
pub const SUMMARY_RATE: f64 = 0.15;

/// How a shot's knapsack value is derived from its frame scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMode {
    /// Mean frame score (the dominant community convention).
    #[default]
    Mean,
    /// Summed frame scores (length-weighted alternative).
    Sum,
}

/// Frame-level summary selection over original (not downsampled) frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryMask {
    pub selected: Vec<bool>,
}

impl SummaryMask {
    pub fn n_selected(&self) -> usize {
        self.selected.iter().filter(|&&b| b).count()
    }
}

/// Step-function expansion of downsampled scores to original frames: frame
/// `f` takes the score of the latest pick at or before `f`; frames before the
/// first pick take the first score.
pub fn expand_scores(s: &Array1<f64>, picks: &[usize], n_frames_original: usize) -> Result<Vec<f64>> {
    if s.len() != picks.len() {
        return Err(EraError::InvalidArgument(format!(
            "{} scores for {} picks",
            s.len(),
            picks.len()
        )));
    }
    if picks.is_empty() {
        return Err(EraError::InvalidArgument("picks must be non-empty".to_string()));
    }
    let mut out = Vec::with_capacity(n_frames_original);
    let mut k = 0usize;
    for f in 0..n_frames_original {
        while k + 1 < picks.len() && picks[k + 1] <= f {
            k += 1;
        }
        out.push(s[k]);
    }
    Ok(out)
}

/// Mean frame score within each shot. Change points must tile
/// `[0, n_frames)` contiguously with inclusive bounds.
pub fn shot_scores(frame_scores: &[f64], change_points: &[(usize, usize)]) -> Result<Vec<f64>> {
    validate_partition(change_points, frame_scores.len())?;
    Ok(change_points
        .iter()
        .map(|&(a, b)| frame_scores[a..=b].iter().sum::<f64>() / (b - a + 1) as f64)
        .collect())
}

fn validate_partition(change_points: &[(usize, usize)], n_frames: usize) -> Result<()> {
    let fail = |msg: String| EraError::InvalidArgument(format!("invalid shot partition: {msg}"));
    if change_points.is_empty() {
        return Err(fail("no shots".to_string()));
    }
    let mut expect = 0usize;
    for &(a, b) in change_points {
        if a != expect {
            return Err(fail(format!("shot starts at {a}, expected {expect}")));
        }
        if b < a {
            return Err(fail(format!("shot ({a}, {b}) is empty")));
        }
        expect = b + 1;
    }
    if expect != n_frames {
        return Err(fail(format!("shots cover {expect} frames of {n_frames}")));
    }
    Ok(())
}

/// Exact 0/1 knapsack: maximize summed value subject to summed length
/// <= capacity. Among maximizing subsets the lexicographically smallest index
/// set is returned. Values accumulate back-to-front so equal-value subsets
/// compare exactly.
pub fn knapsack_select(values: &[f64], lengths: &[usize], capacity: usize) -> Vec<bool> {
    let n = values.len();
    assert_eq!(n, lengths.len(), "one length per value");
    // dp[i][c]: best value using shots i.. with capacity c.
    let mut dp = vec![vec![0.0f64; capacity + 1]; n + 1];
    for i in (0..n).rev() {
        for c in 0..=capacity {
            let skip = dp[i + 1][c];
            let take = if lengths[i] <= c {
                Some(values[i] + dp[i + 1][c - lengths[i]])
            } else {
                None
            };
            dp[i][c] = match take {
                Some(t) if t > skip => t,
                _ => skip,
            };
        }
    }
    let mut selected = vec![false; n];
    let mut c = capacity;
    for i in 0..n {
        let best = dp[i][c];
        if best == 0.0 {
            // Only zero-value shots remain; the empty set is the
            // lexicographically smallest optimum.
            break;
        }
        let can_take = lengths[i] <= c && values[i] + dp[i + 1][c - lengths[i]] == best;
        if can_take {
            // On an exact tie with skipping, taking i still yields the
            // lexicographically smaller set because any optimal set without
            // i starts at a later index (best > 0 rules out the empty set).
            selected[i] = true;
            c -= lengths[i];
        }
    }
    selected
}

/// Pick key shots for a video: shot values from `frame_scores` (original
/// frame level), budget `floor(0.15 * n_frames_original)`.
pub fn select_keyshots(
    record: &VideoRecord,
    frame_scores: &[f64],
    value_mode: ValueMode,
) -> Result<SummaryMask> {
    let n = record.n_frames_original;
    if frame_scores.len() != n {
        return Err(EraError::InvalidArgument(format!(
            "{} frame scores for {} original frames",
            frame_scores.len(),
            n
        )));
    }
    let means = shot_scores(frame_scores, &record.change_points)?;
    let lengths: Vec<usize> = record.change_points.iter().map(|&(a, b)| b - a + 1).collect();
    let values: Vec<f64> = match value_mode {
        ValueMode::Mean => means,
        ValueMode::Sum => means
            .iter()
            .zip(&lengths)
            .map(|(m, &l)| m * l as f64)
            .collect(),
    };
    let capacity = (SUMMARY_RATE * n as f64).floor() as usize;
    let chosen = knapsack_select(&values, &lengths, capacity);
    let mut selected = vec![false; n];
    for (shot, &(a, b)) in record.change_points.iter().enumerate() {
        if chosen[shot] {
            for frame in a..=b {
                selected[frame] = true;
            }
        }
    }
    Ok(SummaryMask { selected })
}

/// Harmonic F-measure between a machine mask and one user's frame selection.
/// Degenerate cases (either side empty, or P + R = 0) score 0.
pub fn f_measure(machine: &SummaryMask, user: ArrayView1<u8>) -> Result<f64> {
    if machine.selected.len() != user.len() {
        return Err(EraError::InvalidArgument(format!(
            "machine mask covers {} frames, user summary {}",
            machine.selected.len(),
            user.len()
        )));
    }
    let m = machine.n_selected() as f64;
    let u = user.iter().filter(|&&v| v != 0).count() as f64;
    if m == 0.0 || u == 0.0 {
        return Ok(0.0);
    }
    let overlap = machine
        .selected
        .iter()
        .zip(user.iter())
        .filter(|(&sel, &usr)| sel && usr != 0)
        .count() as f64;
    let p = overlap / m;
    let r = overlap / u;
    if p + r == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * p * r / (p + r))
}

/// Evaluate one machine scoring of a video against every user summary.
/// Returns the mean and maximum F-measure.
pub fn evaluate_video(
    record: &VideoRecord,
    frame_scores: &[f64],
    value_mode: ValueMode,
) -> Result<(f64, f64)> {
    if record.n_users() == 0 {
        return Err(EraError::InvalidArgument(format!(
            "video `{}` has no user summaries to evaluate against",
            record.video_id
        )));
    }
    let mask = select_keyshots(record, frame_scores, value_mode)?;
    let mut f_sum = 0.0;
    let mut f_max = 0.0f64;
    for user in record.user_summaries.outer_iter() {
        let f = f_measure(&mask, user)?;
        f_sum += f;
        f_max = f_max.max(f);
    }
    Ok((f_sum / record.n_users() as f64, f_max))
}

/// Original-frame scores for one video under a trained model.
pub fn machine_frame_scores(
    models: &Models,
    record: &VideoRecord,
    dets: &FrameDetections,
) -> Result<Vec<f64>> {
    let scores = models.summarizer.summarize(record, dets)?;
    expand_scores(&scores.s_final, &record.picks, record.n_frames_original)
}

/// Uniform random frame scores, seeded per video: the no-learning baseline.
pub fn random_baseline_scores(record: &VideoRecord, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, &format!("baseline/{}", record.video_id));
    (0..record.n_frames_original).map(|_| rng.gen()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FMeasurePair {
    pub f_avg: f64,
    pub f_max: f64,
}

/// One video evaluated under one fold's checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub video_id: String,
    pub fold: usize,
    pub f_avg: f64,
    pub f_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetadata {
    pub split_mode: SplitMode,
    pub seed: u64,
    /// SHA-256 digest of each fold's checkpoint file.
    pub checkpoints: Vec<String>,
    pub value_mode: ValueMode,
}

/// Cross-validated evaluation results. `rows` carries one entry per
/// video-fold test occurrence (the CSV view); `per_video` averages a video
/// over the folds that tested it, which is a single fold for non-overlapping
/// splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub per_video: BTreeMap<String, FMeasurePair>,
    pub per_fold: BTreeMap<usize, FMeasurePair>,
    pub overall: FMeasurePair,
    pub metadata: EvalMetadata,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// Flat table: video_id, fold, f_avg, f_max.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["video_id", "fold", "f_avg", "f_max"]).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record([
                row.video_id.as_str(),
                &row.fold.to_string(),
                &row.f_avg.to_string(),
                &row.f_max.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> EraError {
    EraError::InvalidArgument(format!("csv write failed: {e}"))
}

/// Evaluate one checkpoint per fold, each on its fold's test videos only.
pub fn evaluate_split(
    items: &[(VideoRecord, FrameDetections)],
    split: &SplitSet,
    checkpoints: &[PathBuf],
    value_mode: ValueMode,
) -> Result<EvalReport> {
    if checkpoints.len() != split.folds.len() {
        return Err(EraError::InvalidArgument(format!(
            "{} checkpoints for {} folds; evaluation needs exactly one per fold",
            checkpoints.len(),
            split.folds.len()
        )));
    }
    let known: std::collections::BTreeSet<String> =
        items.iter().map(|(r, _)| r.video_id.clone()).collect();
    split.check_against_dataset(&known)?;
    let by_id: BTreeMap<&str, &(VideoRecord, FrameDetections)> =
        items.iter().map(|item| (item.0.video_id.as_str(), item)).collect();

    let mut rows = Vec::new();
    let mut digests = Vec::new();
    for (fold_idx, (fold, ckpt_path)) in split.folds.iter().zip(checkpoints).enumerate() {
        let (models, _) = models_from_checkpoint(ckpt_path)?;
        digests.push(file_digest(ckpt_path)?);
        for key in &fold.test_keys {
            let (record, dets) = by_id
                .get(key.as_str())
                .ok_or_else(|| EraError::Split(format!("split names unknown video `{key}`")))?;
            let scores = machine_frame_scores(&models, record, dets)?;
            let (f_avg, f_max) = evaluate_video(record, &scores, value_mode)?;
            rows.push(EvalRow {
                video_id: record.video_id.clone(),
                fold: fold_idx,
                f_avg,
                f_max,
            });
        }
    }
    Ok(build_report(rows, split, digests, value_mode))
}

/// Aggregate per-occurrence rows into the report structure.
pub fn build_report(
    rows: Vec<EvalRow>,
    split: &SplitSet,
    checkpoints: Vec<String>,
    value_mode: ValueMode,
) -> EvalReport {
    let mut per_video_acc: BTreeMap<String, Vec<&EvalRow>> = BTreeMap::new();
    let mut per_fold_acc: BTreeMap<usize, Vec<&EvalRow>> = BTreeMap::new();
    for row in &rows {
        per_video_acc.entry(row.video_id.clone()).or_default().push(row);
        per_fold_acc.entry(row.fold).or_default().push(row);
    }
    let mean = |group: &[&EvalRow]| FMeasurePair {
        f_avg: group.iter().map(|r| r.f_avg).sum::<f64>() / group.len() as f64,
        f_max: group.iter().map(|r| r.f_max).sum::<f64>() / group.len() as f64,
    };
    let per_video: BTreeMap<String, FMeasurePair> =
        per_video_acc.iter().map(|(k, v)| (k.clone(), mean(v))).collect();
    let per_fold: BTreeMap<usize, FMeasurePair> =
        per_fold_acc.iter().map(|(&k, v)| (k, mean(v))).collect();
    let overall = if per_fold.is_empty() {
        FMeasurePair { f_avg: 0.0, f_max: 0.0 }
    } else {
        FMeasurePair {
            f_avg: per_fold.values().map(|p| p.f_avg).sum::<f64>() / per_fold.len() as f64,
            f_max: per_fold.values().map(|p| p.f_max).sum::<f64>() / per_fold.len() as f64,
        }
    };
    EvalReport {
        rows,
        per_video,
        per_fold,
        overall,
        metadata: EvalMetadata {
            split_mode: split.mode,
            seed: split.seed,
            checkpoints,
            value_mode,
        },
    }
}
