//! Render a trained model's frame scores as an SVG plot.
//!
//! Trains briefly on synthetic videos, expands the downsampled scores back
//! to the original timeline, shades the knapsack-selected key shots, and
//! overlays the planted ground-truth importance for comparison.

use era::critic::PatchConfig;
use era::dataset::synthetic::{generate_synthetic_with, SynthOptions};
use era::evaluation::{expand_scores, machine_frame_scores, select_keyshots, ValueMode};
use era::plot::ScorePlot;
use era::summarizer::SummarizerConfig;
use era::training::{fit, models_from_checkpoint, TrainConfig};
use era::vae::VaeConfig;
use ndarray::Array1;

fn main() -> era::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("era_plot_scores"));
    std::fs::create_dir_all(&out)?;

    let items = generate_synthetic_with(&SynthOptions {
        n_videos: 3,
        t_range: (12, 16),
        n_users: 3,
        entity_rate: 0.8,
        seed: 13,
        d_scene: 12,
        d_entity: 5,
    })?;

    let sum_cfg = SummarizerConfig {
        d_entity: 5,
        d_scene: 12,
        gcn_hidden: 6,
        gcn_layers: 2,
        mlp_hidden: 8,
        ..SummarizerConfig::default()
    };
    let vae_cfg = VaeConfig { d_input: 12, d_hidden: 8, d_latent: 6, seed: 13 };
    let critic_cfg = PatchConfig { k: 12, m: 1, ..PatchConfig::default() };
    let train = TrainConfig { epochs: 2, seed: 13, ..TrainConfig::default() };
    let result = fit(&items, &sum_cfg, &vae_cfg, &critic_cfg, &train, &out.join("run"), None)?;
    let (models, _) = models_from_checkpoint(&result.best_path)?;

    let (record, dets) = &items[0];
    let scores = machine_frame_scores(&models, record, dets)?;
    let mask = select_keyshots(record, &scores, ValueMode::Mean)?;

    // Planted importance is stored at the downsampled rate.
    let ground_truth = record
        .ground_truth_scores
        .as_ref()
        .map(|g| expand_scores(&Array1::from_vec(g.clone()), &record.picks, record.n_frames_original))
        .transpose()?;

    let plot = ScorePlot {
        video_id: record.video_id.clone(),
        scores,
        ground_truth,
        mask,
    };
    let svg_path = out.join(format!("scores_{}.svg", record.video_id));
    std::fs::write(&svg_path, plot.to_svg())?;
    std::fs::write(out.join(format!("scores_{}.csv", record.video_id)), plot.to_csv())?;
    println!("selected {} of {} frames", plot.mask.n_selected(), record.n_frames_original);
    println!("plot written to {}", svg_path.display());
    Ok(())
}
