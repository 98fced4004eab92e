//! Fit configuration file with dotted-key overrides.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use splatfit_core::losses::LossWeights;
use splatfit_core::optim::{LearningRates, TrainConfig};
use splatfit_core::synth::InitMode;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub count: usize,
    /// Standard deviation of the center jitter.
    pub sigma_p: f64,
    pub mode: InitMode,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            count: 5000,
            sigma_p: 0.02,
            mode: InitMode::SurfaceSample,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub iterations: usize,
    pub seed: u64,
    pub feature_start: usize,
    pub distortion_start: usize,
    pub normal_start: usize,
    pub full_batch: bool,
    pub lr: LearningRates,
    pub adam: AdamConfig,
    pub losses: LossWeights,
    pub init: InitConfig,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            iterations: t.iterations,
            seed: t.seed,
            feature_start: t.feature_start,
            distortion_start: t.distortion_start,
            normal_start: t.normal_start,
            full_batch: t.full_batch,
            lr: t.lr,
            adam: AdamConfig::default(),
            losses: t.weights,
            init: InitConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl FitConfig {
    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            lr: self.lr,
            beta1: self.adam.beta1,
            beta2: self.adam.beta2,
            eps: self.adam.eps,
            weights: self.losses,
            feature_start: self.feature_start,
            distortion_start: self.distortion_start,
            normal_start: self.normal_start,
            full_batch: self.full_batch,
            seed: self.seed,
        }
    }

    /// Canonical serialization, hashed into run manifests.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses `key=value`; the value is read as JSON when possible, otherwise
/// as a string.
fn parse_assignment(assignment: &str) -> Result<(&str, Value), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override {assignment:?} is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(format!("override {assignment:?} has an empty key"));
    }
    let raw = raw.trim();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key, value))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), String> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| format!("{key}: {} is not a section", parts[..i].join(".")))?;
        if !obj.contains_key(*part) {
            return Err(format!("unknown config key {key}"));
        }
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.get_mut(*part).expect("checked above");
    }
    unreachable!("split yields at least one part")
}

/// Layers a JSON config file (if any) and `key=value` overrides over the
/// defaults, last assignment winning.
pub fn load_config(file: Option<&str>, overrides: &[String]) -> Result<FitConfig, String> {
    let base = match file {
        Some(text) => serde_json::from_str::<FitConfig>(text).map_err(|e| format!("config: {e}"))?,
        None => FitConfig::default(),
    };
    let mut value = serde_json::to_value(base).expect("config serializes");
    for o in overrides {
        let (key, v) = parse_assignment(o)?;
        set_path(&mut value, key, v)?;
    }
    serde_json::from_value(value).map_err(|e| format!("config: {e}"))
}

/// Expands `l3=0,l1=0.5` into `losses.l3=0`, `losses.l1=0.5`.
pub fn weight_overrides(spec: &str) -> Vec<String> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| format!("losses.{s}"))
        .collect()
}
