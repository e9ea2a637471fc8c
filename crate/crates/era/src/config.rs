//! One run configuration covering every module, loadable from a TOML file
//! and adjustable with repeated `--set key=value` overrides.
//!
//! Override keys are dotted paths into the config tree
//! (`summarizer.gcn_hidden`, `train.toggles.use_wgan`, `eval.value_mode`).
//! A bare key is resolved against the training section, then its `toggles`
//! and `loss_weights` subsections, then the evaluation section, so the
//! common `--set lr=1e-4 --set epochs=2 --set use_wgan=false` forms work
//! unprefixed. Every bad key or value is reported, not just the first.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::critic::PatchConfig;
use crate::error::{EraError, Result};
use crate::evaluation::ValueMode;
use crate::summarizer::SummarizerConfig;
use crate::training::TrainConfig;
use crate::vae::VaeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub value_mode: ValueMode,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub summarizer: SummarizerConfig,
    pub vae: VaeConfig,
    pub critic: PatchConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| EraError::Config(vec![format!("config parse failed: {e}")]))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            EraError::Config(vec![format!("cannot read config `{}`: {e}", path.display())])
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| EraError::Config(vec![format!("config serialization failed: {e}")]))
    }

    /// Load `path` if given (defaults otherwise), apply overrides, validate.
    pub fn resolve(path: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(sets)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `key=value` overrides. All failures are collected so one pass
    /// reports every offending key.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<()> {
        if sets.is_empty() {
            return Ok(());
        }
        let mut tree = toml::Value::try_from(&*self)
            .map_err(|e| EraError::Config(vec![format!("config serialization failed: {e}")]))?;
        let mut problems = Vec::new();
        for set in sets {
            if let Err(msg) = apply_one(&mut tree, set) {
                problems.push(msg);
            }
        }
        if !problems.is_empty() {
            return Err(EraError::Config(problems));
        }
        *self = tree
            .try_into()
            .map_err(|e| EraError::Config(vec![format!("override produced invalid config: {e}")]))?;
        Ok(())
    }

    /// Collect every constraint violation across all sections.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut absorb = |r: Result<()>| match r {
            Err(EraError::Config(list)) => problems.extend(list),
            Err(other) => problems.push(other.to_string()),
            Ok(()) => {}
        };
        absorb(self.critic.validate());
        absorb(self.train.validate());
        if self.summarizer.d_scene == 0 {
            problems.push("summarizer.d_scene: must be positive".to_string());
        }
        if self.vae.d_input != self.summarizer.d_scene {
            problems.push(format!(
                "vae.d_input: {} does not match summarizer.d_scene {}",
                self.vae.d_input, self.summarizer.d_scene
            ));
        }
        if self.vae.d_hidden == 0 || self.vae.d_latent == 0 {
            problems.push("vae: d_hidden and d_latent must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(EraError::Config(problems))
        }
    }
}

/// Sections a bare (undotted) key is resolved against, in order.
const BARE_KEY_SECTIONS: [&[&str]; 4] = [
    &["train"],
    &["train", "toggles"],
    &["train", "loss_weights"],
    &["eval"],
];

fn apply_one(tree: &mut toml::Value, set: &str) -> std::result::Result<(), String> {
    let (key, raw) = set
        .split_once('=')
        .ok_or_else(|| format!("`{set}`: expected key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(format!("`{set}`: empty key"));
    }
    let segments: Vec<&str> = if key.contains('.') {
        key.split('.').collect()
    } else {
        let root = tree.clone();
        let section = BARE_KEY_SECTIONS
            .iter()
            .find(|path| lookup(&root, path).and_then(|t| t.get(key)).is_some())
            .ok_or_else(|| format!("`{key}`: unknown config key"))?;
        section.iter().copied().chain([key]).collect()
    };
    let (field, parents) = segments.split_last().expect("segments nonempty");
    let mut node = &mut *tree;
    for seg in parents {
        node = node
            .get_mut(seg)
            .ok_or_else(|| format!("`{key}`: no config section `{seg}`"))?;
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| format!("`{key}`: `{}` is not a section", parents.join(".")))?;
    let slot = table
        .get_mut(*field)
        .ok_or_else(|| format!("`{key}`: unknown config key"))?;
    *slot = parse_as(slot, raw).map_err(|msg| format!("`{key}`: {msg}"))?;
    Ok(())
}

fn lookup<'t>(tree: &'t toml::Value, path: &[&str]) -> Option<&'t toml::Value> {
    path.iter().try_fold(tree, |node, seg| node.get(seg))
}

/// Parse `raw` with the type of the value it replaces.
fn parse_as(current: &toml::Value, raw: &str) -> std::result::Result<toml::Value, String> {
    use toml::Value::*;
    match current {
        Boolean(_) => raw
            .parse()
            .map(Boolean)
            .map_err(|_| format!("expected true or false, got `{raw}`")),
        Integer(_) => raw
            .parse()
            .map(Integer)
            .map_err(|_| format!("expected an integer, got `{raw}`")),
        Float(_) => raw
            .parse()
            .map(Float)
            .map_err(|_| format!("expected a number, got `{raw}`")),
        String(_) => Ok(String(raw.trim_matches('"').to_string())),
        Array(_) => Err("list-valued fields cannot be overridden with --set".to_string()),
        other => Err(format!("field of type {} cannot be overridden", other.type_str())),
    }
}
