//! Cross-validation split generation and the JSON split-file format.
//!
//! Files are written as an object `{mode, seed, folds}` so a round trip
//! preserves everything; the bare community layout (a JSON list of
//! `{train_keys, test_keys}` records) is accepted on read, with the mode
//! inferred from whether the test sets partition the id universe.

use super::{Fold, SplitMode, SplitSet};
use crate::error::{EraError, Result};
use crate::rng::substream;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

impl SplitSet {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    /// Every id referenced anywhere in the split.
    pub fn all_ids(&self) -> BTreeSet<String> {
        let mut ids = BTreeSet::new();
        for fold in &self.folds {
            ids.extend(fold.train_keys.iter().cloned());
            ids.extend(fold.test_keys.iter().cloned());
        }
        ids
    }

    /// Structural invariants: disjoint train/test covering the id universe
    /// per fold, and (non-overlapping mode) test sets forming a partition.
    pub fn validate(&self) -> Result<()> {
        if self.folds.is_empty() {
            return Err(EraError::Split("split set has no folds".into()));
        }
        let all = self.all_ids();
        for (i, fold) in self.folds.iter().enumerate() {
            let train: BTreeSet<&String> = fold.train_keys.iter().collect();
            let test: BTreeSet<&String> = fold.test_keys.iter().collect();
            if train.len() != fold.train_keys.len() || test.len() != fold.test_keys.len() {
                return Err(EraError::Split(format!("fold {i}: duplicate ids within a key list")));
            }
            if let Some(id) = train.intersection(&test).next() {
                return Err(EraError::Split(format!("fold {i}: id {id} is in both train and test")));
            }
            if train.len() + test.len() != all.len() {
                return Err(EraError::Split(format!(
                    "fold {i}: train+test covers {} of {} ids",
                    train.len() + test.len(),
                    all.len()
                )));
            }
            if fold.test_keys.is_empty() || fold.train_keys.is_empty() {
                return Err(EraError::Split(format!("fold {i}: empty train or test set")));
            }
        }
        if self.mode == SplitMode::NonOverlapping {
            let mut seen = BTreeSet::new();
            for (i, fold) in self.folds.iter().enumerate() {
                for id in &fold.test_keys {
                    if !seen.insert(id.clone()) {
                        return Err(EraError::Split(format!(
                            "non-overlapping split, but id {id} appears in multiple test sets (fold {i})"
                        )));
                    }
                }
            }
            if seen.len() != all.len() {
                return Err(EraError::Split(format!(
                    "non-overlapping split covers {} of {} ids in test sets",
                    seen.len(),
                    all.len()
                )));
            }
        }
        Ok(())
    }

    /// Check that every referenced id exists in the dataset.
    pub fn check_against_dataset(&self, known: &BTreeSet<String>) -> Result<()> {
        let unknown: Vec<String> = self.all_ids().difference(known).cloned().collect();
        if !unknown.is_empty() {
            return Err(EraError::Split(format!(
                "split references ids not in the dataset: {}",
                unknown.join(", ")
            )));
        }
        Ok(())
    }
}

/// Deterministically generate cross-validation folds.
pub fn generate_splits(video_ids: &[String], n_folds: usize, mode: SplitMode, seed: u64) -> Result<SplitSet> {
    if n_folds < 2 {
        return Err(EraError::InvalidArgument(format!("need at least 2 folds, got {n_folds}")));
    }
    if video_ids.len() < n_folds {
        return Err(EraError::InvalidArgument(format!(
            "{} videos cannot fill {} folds",
            video_ids.len(),
            n_folds
        )));
    }
    let unique: BTreeSet<&String> = video_ids.iter().collect();
    if unique.len() != video_ids.len() {
        return Err(EraError::InvalidArgument("duplicate video ids".into()));
    }

    let n = video_ids.len();
    let folds = match mode {
        SplitMode::NonOverlapping => {
            let mut shuffled: Vec<String> = video_ids.to_vec();
            shuffled.shuffle(&mut substream(seed, "splits/shuffle"));
            // First n % n_folds test sets get one extra id.
            let base = n / n_folds;
            let extra = n % n_folds;
            let mut folds = Vec::with_capacity(n_folds);
            let mut start = 0usize;
            for f in 0..n_folds {
                let size = base + usize::from(f < extra);
                let mut test_keys: Vec<String> = shuffled[start..start + size].to_vec();
                let mut train_keys: Vec<String> = shuffled[..start]
                    .iter()
                    .chain(&shuffled[start + size..])
                    .cloned()
                    .collect();
                test_keys.sort();
                train_keys.sort();
                folds.push(Fold { train_keys, test_keys });
                start += size;
            }
            folds
        }
        SplitMode::Overlapping => {
            let test_size = ((n as f64 / n_folds as f64).round() as usize).max(1);
            (0..n_folds)
                .map(|f| {
                    let mut shuffled: Vec<String> = video_ids.to_vec();
                    shuffled.shuffle(&mut substream(seed, &format!("splits/fold{f}")));
                    let mut test_keys: Vec<String> = shuffled[..test_size].to_vec();
                    let mut train_keys: Vec<String> = shuffled[test_size..].to_vec();
                    test_keys.sort();
                    train_keys.sort();
                    Fold { train_keys, test_keys }
                })
                .collect()
        }
    };
    let set = SplitSet { folds, mode, seed };
    set.validate()?;
    Ok(set)
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    mode: SplitMode,
    seed: u64,
    folds: Vec<Fold>,
}

pub fn save_splits(splits: &SplitSet, path: &Path) -> Result<()> {
    let file = SplitFile {
        mode: splits.mode,
        seed: splits.seed,
        folds: splits.folds.clone(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_splits(path: &Path) -> Result<SplitSet> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| EraError::Split(format!("{}: not valid JSON: {e}", path.display())))?;
    let set = if value.is_array() {
        // Community layout: a bare list of folds. Infer the mode from the
        // test-set structure; the seed is unknown.
        let folds: Vec<Fold> = serde_json::from_value(value)
            .map_err(|e| EraError::Split(format!("{}: malformed fold list: {e}", path.display())))?;
        let probe = SplitSet { folds, mode: SplitMode::Overlapping, seed: 0 };
        let partitioned = {
            let mut seen = BTreeSet::new();
            let disjoint = probe
                .folds
                .iter()
                .all(|f| f.test_keys.iter().all(|id| seen.insert(id.clone())));
            disjoint && seen == probe.all_ids()
        };
        SplitSet {
            mode: if partitioned { SplitMode::NonOverlapping } else { SplitMode::Overlapping },
            ..probe
        }
    } else {
        let file: SplitFile = serde_json::from_value(value)
            .map_err(|e| EraError::Split(format!("{}: malformed split file: {e}", path.display())))?;
        SplitSet {
            folds: file.folds,
            mode: file.mode,
            seed: file.seed,
        }
    };
    set.validate()?;
    Ok(set)
}
