//! Key-shot selection mechanics on a hand-built video.
//!
//! Frame scores become per-shot values, the 0/1 knapsack packs shots under a
//! 15% frame budget, and the resulting whole-shot summary is compared to
//! user selections by F-measure. Mean and sum shot values disagree on this
//! instance: the mean favors a short intense shot, the sum a longer mild one.

use era::dataset::VideoRecord;
use era::evaluation::{f_measure, select_keyshots, shot_scores, ValueMode};
use ndarray::Array2;

fn main() -> era::Result<()> {
    // 40 original frames in three shots: 2 intense, 6 mild, 32 flat.
    // Budget floor(0.15 * 40) = 6 frames, so the two scored shots compete.
    let n = 40;
    let change_points = vec![(0usize, 1usize), (2, 7), (8, 39)];
    let mut frame_scores = vec![0.0; n];
    for f in 0..2 {
        frame_scores[f] = 0.9;
    }
    for f in 2..8 {
        frame_scores[f] = 0.4;
    }

    let shots = shot_scores(&frame_scores, &change_points)?;
    println!("shot mean scores: {shots:?}");
    println!("shot lengths: [2, 6, 32], budget 6 frames");

    // User 0 marks the intense shot, user 1 the mild one.
    let mut user_summaries = Array2::<u8>::zeros((2, n));
    for f in 0..2 {
        user_summaries[[0, f]] = 1;
    }
    for f in 2..8 {
        user_summaries[[1, f]] = 1;
    }
    let record = VideoRecord {
        video_id: "demo".into(),
        scene_features: Array2::zeros((5, 4)),
        n_frames_original: n,
        picks: vec![0, 8, 16, 24, 32],
        change_points: change_points.clone(),
        user_summaries: user_summaries.clone(),
        ground_truth_scores: None,
    };

    for mode in [ValueMode::Mean, ValueMode::Sum] {
        let mask = select_keyshots(&record, &frame_scores, mode)?;
        let picked: Vec<usize> = change_points
            .iter()
            .enumerate()
            .filter(|(_, &(a, _))| mask.selected[a])
            .map(|(s, _)| s)
            .collect();
        println!("\n{mode:?} value mode picks shots {picked:?} ({} frames)", mask.n_selected());
        for u in 0..2 {
            let f = f_measure(&mask, user_summaries.row(u))?;
            println!("  F against user {u}: {f:.4}");
        }
    }
    Ok(())
}
