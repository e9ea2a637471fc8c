//! HDF5 dataset container, one group per video.
//!
//! Required arrays per group: `features` [T_d × D_s] real32, `n_frames`
//! scalar, `picks` [T_d], `change_points` [n_shots × 2], `user_summary`
//! [n_users × n_frames]. Optional: `gtscore` [T_d], plus ragged detections
//! `entity_boxes_<t>` / `entity_feats_<t>` for t in 0..T_d. This matches the
//! eccv16-style preprocessed benchmark layout for the required keys; reads
//! are tolerant of integer/float dtype variation across community files.

use super::{FrameDetections, FrameEntities, VideoRecord};
use crate::error::{container, EraError, Result};
use hdf5::Group;
use ndarray::{Array1, Array2};

fn read_2d_f64(g: &Group, video: &str, name: &str) -> Result<Array2<f64>> {
    let ds = g
        .dataset(name)
        .map_err(|e| container(video, name, format!("missing or unreadable: {e}")))?;
    ds.read_2d::<f64>()
        .map_err(|e| container(video, name, format!("expected a 2-d numeric array: {e}")))
}

fn read_1d_f64(g: &Group, video: &str, name: &str) -> Result<Array1<f64>> {
    let ds = g
        .dataset(name)
        .map_err(|e| container(video, name, format!("missing or unreadable: {e}")))?;
    ds.read_1d::<f64>()
        .map_err(|e| container(video, name, format!("expected a 1-d numeric array: {e}")))
}

fn as_index(video: &str, name: &str, v: f64) -> Result<usize> {
    if !v.is_finite() || v.fract() != 0.0 || v < 0.0 {
        return Err(container(video, name, format!("value {v} is not a non-negative integer")));
    }
    Ok(v as usize)
}

fn read_scalar_u64(g: &Group, video: &str, name: &str) -> Result<u64> {
    let ds = g
        .dataset(name)
        .map_err(|e| container(video, name, format!("missing or unreadable: {e}")))?;
    let v = if ds.ndim() == 0 {
        ds.read_scalar::<f64>()
            .map_err(|e| container(video, name, format!("expected a numeric scalar: {e}")))?
    } else {
        let raw = ds
            .read_raw::<f64>()
            .map_err(|e| container(video, name, format!("expected a numeric scalar: {e}")))?;
        if raw.len() != 1 {
            return Err(container(video, name, format!("expected a scalar, got {} elements", raw.len())));
        }
        raw[0]
    };
    Ok(as_index(video, name, v)? as u64)
}

fn read_video(g: &Group, video: &str) -> Result<(VideoRecord, FrameDetections)> {
    let scene_features = read_2d_f64(g, video, "features")?;
    let t_d = scene_features.nrows();
    let n_frames_original = read_scalar_u64(g, video, "n_frames")? as usize;

    let picks_raw = read_1d_f64(g, video, "picks")?;
    let mut picks = Vec::with_capacity(picks_raw.len());
    for &v in picks_raw.iter() {
        picks.push(as_index(video, "picks", v)?);
    }

    let cps_raw = read_2d_f64(g, video, "change_points")?;
    if cps_raw.ncols() != 2 {
        return Err(container(video, "change_points", format!("expected 2 columns, got {}", cps_raw.ncols())));
    }
    let mut change_points = Vec::with_capacity(cps_raw.nrows());
    for row in cps_raw.outer_iter() {
        change_points.push((
            as_index(video, "change_points", row[0])?,
            as_index(video, "change_points", row[1])?,
        ));
    }

    let us_raw = read_2d_f64(g, video, "user_summary")?;
    let mut user_summaries = Array2::<u8>::zeros(us_raw.dim());
    for ((i, j), &v) in us_raw.indexed_iter() {
        if v != 0.0 && v != 1.0 {
            return Err(container(video, "user_summary", format!("entry ({i},{j}) = {v}, expected 0 or 1")));
        }
        user_summaries[[i, j]] = v as u8;
    }

    let ground_truth_scores = if g.link_exists("gtscore") {
        Some(read_1d_f64(g, video, "gtscore")?.to_vec())
    } else {
        None
    };

    let record = VideoRecord {
        video_id: video.to_string(),
        scene_features,
        n_frames_original,
        picks,
        change_points,
        user_summaries,
        ground_truth_scores,
    };

    // Detections are optional per frame; a frame with no arrays has N_t = 0.
    let mut raw_frames: Vec<Option<FrameEntities>> = Vec::with_capacity(t_d);
    for t in 0..t_d {
        let b_name = format!("entity_boxes_{t}");
        let f_name = format!("entity_feats_{t}");
        if g.link_exists(&b_name) || g.link_exists(&f_name) {
            let boxes = read_2d_f64(g, video, &b_name)?;
            let features = read_2d_f64(g, video, &f_name)?;
            raw_frames.push(Some(FrameEntities { boxes, features }));
        } else {
            raw_frames.push(None);
        }
    }
    let d_entity = raw_frames
        .iter()
        .flatten()
        .find(|f| f.n_entities() > 0)
        .map(|f| f.features.ncols())
        .unwrap_or(0);
    let frames = raw_frames
        .into_iter()
        .map(|opt| opt.unwrap_or_else(|| FrameEntities::empty(d_entity)))
        .map(|f| if f.n_entities() == 0 { FrameEntities::empty(d_entity) } else { f })
        .collect();
    let detections = FrameDetections { frames, d_entity };

    super::validate_video(&record, &detections)?;
    Ok((record, detections))
}

/// Load every video group in the container, sorted by group name.
pub fn load_dataset(path: &std::path::Path) -> Result<Vec<(VideoRecord, FrameDetections)>> {
    let file = hdf5::File::open(path)
        .map_err(|e| EraError::Container {
            video: "<file>".into(),
            array: path.display().to_string(),
            msg: format!("cannot open container: {e}"),
        })?;
    let mut names = file
        .member_names()
        .map_err(|e| container("<file>", "/", format!("cannot list groups: {e}")))?;
    names.sort();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let g = file
            .group(&name)
            .map_err(|e| container(&name, "/", format!("not a group: {e}")))?;
        out.push(read_video(&g, &name)?);
    }
    Ok(out)
}

/// Write videos to a new container file (overwrites an existing file).
pub fn save_dataset(path: &std::path::Path, items: &[(VideoRecord, FrameDetections)]) -> Result<()> {
    let file = hdf5::File::create(path).map_err(|e| EraError::Container {
        video: "<file>".into(),
        array: path.display().to_string(),
        msg: format!("cannot create container: {e}"),
    })?;
    for (record, dets) in items {
        let id = &record.video_id;
        let wrap = |name: &str, e: hdf5::Error| container(id, name, format!("write failed: {e}"));
        let g = file
            .create_group(id)
            .map_err(|e| container(id, "/", format!("cannot create group: {e}")))?;
        let features = record.scene_features.mapv(|v| v as f32);
        g.new_dataset_builder()
            .with_data(&features)
            .create("features")
            .map_err(|e| wrap("features", e))?;
        g.new_dataset::<i64>()
            .create("n_frames")
            .and_then(|ds| ds.write_scalar(&(record.n_frames_original as i64)))
            .map_err(|e| wrap("n_frames", e))?;
        let picks: Vec<i64> = record.picks.iter().map(|&p| p as i64).collect();
        g.new_dataset_builder()
            .with_data(&picks)
            .create("picks")
            .map_err(|e| wrap("picks", e))?;
        let mut cps = Array2::<i64>::zeros((record.change_points.len(), 2));
        for (i, &(s, e)) in record.change_points.iter().enumerate() {
            cps[[i, 0]] = s as i64;
            cps[[i, 1]] = e as i64;
        }
        g.new_dataset_builder()
            .with_data(&cps)
            .create("change_points")
            .map_err(|e| wrap("change_points", e))?;
        g.new_dataset_builder()
            .with_data(&record.user_summaries)
            .create("user_summary")
            .map_err(|e| wrap("user_summary", e))?;
        if let Some(gt) = &record.ground_truth_scores {
            let gt32: Vec<f32> = gt.iter().map(|&v| v as f32).collect();
            g.new_dataset_builder()
                .with_data(&gt32)
                .create("gtscore")
                .map_err(|e| wrap("gtscore", e))?;
        }
        if dets.total_entities() > 0 {
            for (t, frame) in dets.frames.iter().enumerate() {
                let b_name = format!("entity_boxes_{t}");
                let f_name = format!("entity_feats_{t}");
                g.new_dataset_builder()
                    .with_data(&frame.boxes)
                    .create(b_name.as_str())
                    .map_err(|e| wrap(&b_name, e))?;
                let feats = frame.features.mapv(|v| v as f32);
                g.new_dataset_builder()
                    .with_data(&feats)
                    .create(f_name.as_str())
                    .map_err(|e| wrap(&f_name, e))?;
            }
        }
    }
    Ok(())
}
