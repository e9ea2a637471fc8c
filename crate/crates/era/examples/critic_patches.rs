//! Show what the patch critic actually sees.
//!
//! With M strided blocks each patch scores an exclusive window of 5^M
//! frames, so the critic judges local stretches of the feature sequence
//! rather than the whole video at once. Perturbing a single frame moves
//! exactly one patch score, demonstrated below bit-for-bit.

use era::critic::{Critic, PatchConfig, PATCH_STRIDE};
use era::rng::substream;
use ndarray::Array2;
use rand::Rng;

fn main() -> era::Result<()> {
    let mut rng = substream(4, "example/critic");
    let k = 8;

    println!("patch counts (T frames -> ceil(T / 5^M) scores):");
    for m in 0..=3usize {
        let critic = Critic::patch(PatchConfig { k, m, ..PatchConfig::default() }, &mut rng)?;
        let counts: Vec<usize> = [1usize, 5, 6, 25, 100, 125, 126]
            .iter()
            .map(|&t| {
                let x = Array2::from_shape_fn((t, k), |_| rng.gen_range(-1.0..1.0));
                critic.forward(&x).unwrap().scores().len()
            })
            .collect();
        println!("  M={m}: {counts:?}");
    }

    let m = 2;
    let window = PATCH_STRIDE.pow(m as u32);
    let critic = Critic::patch(PatchConfig { k, m, ..PatchConfig::default() }, &mut rng)?;
    let t = 60;
    let x = Array2::from_shape_fn((t, k), |_| rng.gen_range(-1.0..1.0));
    let base = critic.forward(&x)?.scores().to_owned();

    println!("\nM={m}: each patch covers {window} frames; T={t} gives {} patches", base.len());
    for &frame in &[0usize, 24, 25, 59] {
        let mut bumped = x.clone();
        bumped[[frame, 0]] += 1.0;
        let scores = critic.forward(&bumped)?.scores().to_owned();
        let moved: Vec<usize> = (0..base.len()).filter(|&p| scores[p] != base[p]).collect();
        println!("  perturb frame {frame:>2} -> patches moved: {moved:?} (expected [{}])", frame / window);
    }
    Ok(())
}
