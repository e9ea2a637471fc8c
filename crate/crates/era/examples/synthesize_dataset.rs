//! Generate a planted synthetic benchmark and save it as an HDF5 container.
//!
//! Each video hides a few "key" shots whose features point along a shared
//! highlight direction; simulated users select those shots. The container
//! uses the standard preprocessed-benchmark layout, so everything downstream
//! (training, evaluation, plotting) reads it the same way as real data.

use era::dataset::container::{load_dataset, save_dataset};
use era::dataset::synthetic::{generate_synthetic_with, SynthOptions};

fn main() -> era::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("era_synthetic.h5"));

    let items = generate_synthetic_with(&SynthOptions {
        n_videos: 8,
        t_range: (12, 20),
        n_users: 4,
        entity_rate: 0.8,
        seed: 7,
        d_scene: 24,
        d_entity: 8,
    })?;

    for (record, dets) in &items {
        let key_frames: usize = record
            .ground_truth_scores
            .as_ref()
            .map(|g| g.iter().filter(|&&v| v > 0.5).count())
            .unwrap_or(0);
        println!(
            "{}: {} original frames, {} downsampled, {} shots, {} entities, {} key picks",
            record.video_id,
            record.n_frames_original,
            record.t_downsampled(),
            record.change_points.len(),
            dets.total_entities(),
            key_frames,
        );
    }

    save_dataset(&out, &items)?;
    let reloaded = load_dataset(&out)?;
    assert_eq!(reloaded.len(), items.len());
    println!("\nwrote {} videos to {}", items.len(), out.display());
    Ok(())
}
