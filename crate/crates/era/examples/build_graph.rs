//! Assemble the spatio-temporal entity graph for one video and inspect it.
//!
//! The adjacency is block-sparse: a softmax-normalized IOU block per frame on
//! the diagonal, and a softmax-normalized feature-similarity block linking
//! each frame to its successor. Every row therefore sums to 2 when the next
//! frame has entities and to 1 otherwise, which is checked here directly.

use era::dataset::synthetic::{generate_synthetic_with, SynthOptions};
use era::stgraph::assemble_adjacency;

fn main() -> era::Result<()> {
    let items = generate_synthetic_with(&SynthOptions {
        n_videos: 1,
        t_range: (10, 10),
        n_users: 2,
        entity_rate: 0.6,
        seed: 3,
        d_scene: 16,
        d_entity: 6,
    })?;
    let (record, dets) = &items[0];

    let adj = assemble_adjacency(dets)?;
    println!(
        "{}: {} frames, {} entity nodes, {} nonzeros",
        record.video_id,
        dets.t_downsampled(),
        adj.n_nodes(),
        adj.matrix.nnz()
    );

    println!("\nentities per frame:");
    for (t, frame) in dets.frames.iter().enumerate() {
        let n = frame.n_entities();
        let marker = if n == 0 { " (breaks the temporal chain)" } else { "" };
        println!("  frame {t}: {n}{marker}");
    }

    let sums = adj.matrix.row_sums();
    println!("\nrow sums by frame:");
    for t in 0..dets.t_downsampled() {
        let (a, b) = (adj.frame_offsets[t], adj.frame_offsets[t + 1]);
        if a == b {
            continue;
        }
        let vals: Vec<String> = sums[a..b].iter().map(|v| format!("{v:.12}")).collect();
        println!("  frame {t}: [{}]", vals.join(", "));
    }

    // The law the training graph relies on.
    for t in 0..dets.t_downsampled() {
        let has_next = t + 1 < dets.t_downsampled() && dets.frames[t + 1].n_entities() > 0;
        let expect = if has_next { 2.0 } else { 1.0 };
        for node in adj.frame_offsets[t]..adj.frame_offsets[t + 1] {
            assert!((sums[node] - expect).abs() < 1e-12);
        }
    }
    println!("\nrow-sum law holds for every node");
    Ok(())
}
