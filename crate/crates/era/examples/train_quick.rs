//! Train the full adversarial system on a small synthetic set.
//!
//! One batch is one video: several critic updates on real-vs-generated
//! feature sequences, then one generator update combining reconstruction,
//! prior, sparsity, score-sum and adversarial terms. Artifacts land in the
//! output directory as best.ckpt, last.ckpt and train_log.jsonl, and the run
//! is byte-reproducible from the seed.

use era::critic::PatchConfig;
use era::summarizer::SummarizerConfig;
use era::training::{fit, TrainConfig};
use era::vae::VaeConfig;

fn main() -> era::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("era_train_quick"));

    let items = era::dataset::synthetic::generate_synthetic_with(
        &era::dataset::synthetic::SynthOptions {
            n_videos: 4,
            t_range: (12, 16),
            n_users: 3,
            entity_rate: 0.8,
            seed: 1,
            d_scene: 16,
            d_entity: 6,
        },
    )?;

    let sum_cfg = SummarizerConfig {
        d_entity: 6,
        d_scene: 16,
        gcn_hidden: 8,
        gcn_layers: 3,
        mlp_hidden: 12,
        ..SummarizerConfig::default()
    };
    let vae_cfg = VaeConfig { d_input: 16, d_hidden: 12, d_latent: 8, seed: 1 };
    let critic_cfg = PatchConfig { k: 16, m: 1, ..PatchConfig::default() };
    let train = TrainConfig { epochs: 4, seed: 1, ..TrainConfig::default() };

    let result = fit(&items, &sum_cfg, &vae_cfg, &critic_cfg, &train, &out, None)?;
    println!(
        "trained {} epochs, {} generator steps, final lr {:.1e}",
        result.epochs_run, result.steps_run, result.final_lr
    );
    println!(
        "best generator total {:.4} at epoch {}",
        result.best_total, result.best_epoch
    );

    let log = std::fs::read_to_string(&result.log_path)?;
    println!("\nfirst and last training-log records:");
    if let (Some(first), Some(last)) = (log.lines().next(), log.lines().last()) {
        println!("  {first}");
        println!("  {last}");
    }
    println!("\nartifacts in {}", out.display());
    Ok(())
}
