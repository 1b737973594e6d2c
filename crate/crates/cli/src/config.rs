//! Experiment configuration: a JSON file, then `--set key.path=value`
//! overrides, then explicit flags.

use std::path::{Path, PathBuf};

use litset_core::biencoder::EncoderConfig;
use litset_core::fewshot::SplitParams;
use litset_core::litset::SamplingConfig;
use litset_core::trainer::TrainConfig;
use litset_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub kb: Option<PathBuf>,
    pub mentions: Option<PathBuf>,
    pub sentences: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSettings {
    pub n_labels: Vec<usize>,
    pub schemes: Vec<String>,
    pub budget: Option<usize>,
    /// Verbalization tables for the non-cryptic schemes, by scheme name.
    pub scheme_tables: std::collections::BTreeMap<String, PathBuf>,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            n_labels: vec![3, 5, 10, 30, 50],
            schemes: vec!["cryptic".into(), "short".into(), "long".into()],
            budget: None,
            scheme_tables: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub split: SplitParams,
    pub sampling: SamplingConfig,
    pub encoder: EncoderConfig,
    pub lit: TrainConfig,
    pub fewshot: TrainConfig,
    pub k_list: Vec<usize>,
    pub split_seeds: Vec<u64>,
    pub support_seeds: Vec<u64>,
    pub grid: GridSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            split: SplitParams::RandomHalf,
            sampling: SamplingConfig::new(Default::default(), 0),
            encoder: EncoderConfig::default(),
            lit: TrainConfig::lit_baseline(),
            fewshot: TrainConfig::fewshot_baseline(),
            k_list: vec![0, 1, 5, 10],
            split_seeds: vec![0, 1, 2],
            support_seeds: vec![0, 1, 2],
            grid: GridSettings::default(),
        }
    }
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies one `a.b.c=value` override. The value is read as JSON when it
/// parses, otherwise as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override `{assignment}` is not of the form key=value")))?;
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::InvalidConfig(format!("empty key segment in `{key}`")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("`{key}` descends into a non-object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parse_scalar(raw));
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    unreachable!("split always yields at least one segment")
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Defaults, overlaid with the config file and the overrides.
pub fn resolve(base: ExperimentConfig, file: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut value = serde_json::to_value(&base)?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("config {} is not valid JSON: {e}", path.display())))?;
        merge(&mut value, patch);
    }
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::InvalidConfig(format!("configuration: {e}")))?;
    // keys that deserialization silently dropped are typos
    let resolved = serde_json::to_value(&cfg)?;
    for o in overrides {
        let key = o.split_once('=').map_or(o.as_str(), |(k, _)| k);
        let pointer = format!("/{}", key.replace('.', "/"));
        if resolved.pointer(&pointer).is_none() {
            return Err(Error::InvalidConfig(format!("unknown configuration key `{key}`")));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = resolve(
            ExperimentConfig::default(),
            None,
            &["lit.learning_rate=0.001".into(), "encoder.token_encoder_id=tiny-mix".into(), "k_list=[1,5]".into()],
        )
        .unwrap();
        assert_eq!(cfg.lit.learning_rate, 1e-3);
        assert_eq!(cfg.k_list, vec![1, 5]);
        assert!(resolve(ExperimentConfig::default(), None, &["lit.nope=1".into()]).is_err());
        assert!(resolve(ExperimentConfig::default(), None, &["lit".into()]).is_err());

        let split = resolve(
            ExperimentConfig::default(),
            None,
            &["split.mode=frequency".into(), "split.n_lit=3".into(), "split.n_fs=2".into()],
        )
        .unwrap();
        assert_eq!(split.split, SplitParams::Frequency { n_lit: 3, n_fs: 2 });
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    }
}
