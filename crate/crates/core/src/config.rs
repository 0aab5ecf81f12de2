//! The run configuration document (TOML) read by `train`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{line_of, SubsetMode};
use crate::error::{Error, Result};
use crate::metrics::Averaging;
use crate::model::{ModelConfig, WeightSource};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Directory of `<CODE>/<image>` folders.
    pub root: PathBuf,
    /// Optional TOML taxonomy override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
    #[serde(default = "default_subset_fraction")]
    pub subset_fraction: f64,
    #[serde(default)]
    pub subset_mode: SubsetMode,
    #[serde(default)]
    pub subset_seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_subset_fraction() -> f64 {
    0.2
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub run_dir: PathBuf,
    pub averaging: Averaging,
    pub eval_batch_size: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            run_dir: PathBuf::from("runs/latest"),
            averaging: Averaging::Macro,
            eval_batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub weights: WeightSource,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A parsed config plus a notice for every key that fell back to its
/// default.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub notices: Vec<String>,
}

fn collect_defaults(resolved: &toml::Table, raw: &toml::Table, prefix: &str, notices: &mut Vec<String>) {
    for (key, value) in resolved {
        let name = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (value, raw.get(key)) {
            (toml::Value::Table(sub), Some(toml::Value::Table(raw_sub))) => {
                collect_defaults(sub, raw_sub, &name, notices)
            }
            (toml::Value::Table(sub), None) => collect_defaults(sub, &toml::Table::new(), &name, notices),
            (_, None) => notices.push(format!("{name} not set, using default {value}")),
            _ => {}
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, source_name: &str) -> Result<LoadedConfig> {
        let parse_err = |e: toml::de::Error| Error::Parse {
            source_name: source_name.to_string(),
            line: line_of(text, e.span().map(|s| s.start)),
            message: e.message().to_string(),
        };
        let config: RunConfig = toml::from_str(text).map_err(parse_err)?;
        let raw: toml::Table = toml::from_str(text).map_err(parse_err)?;
        let resolved = toml::Table::try_from(&config).expect("config serializes");
        let mut notices = Vec::new();
        collect_defaults(&resolved, &raw, "", &mut notices);
        config.validate()?;
        Ok(LoadedConfig { config, notices })
    }

    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if !(d.subset_fraction > 0.0 && d.subset_fraction <= 1.0) {
            return Err(Error::invalid(format!("dataset.subset_fraction {} not in (0, 1]", d.subset_fraction)));
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(Error::invalid(format!("dataset.train_fraction {} not in (0, 1)", d.train_fraction)));
        }
        if self.output.eval_batch_size == 0 {
            return Err(Error::invalid("output.eval_batch_size must be at least 1"));
        }
        self.model.validate()?;
        self.training.validate()
    }

    /// Uses `seed` for every randomized step.
    pub fn override_seed(&mut self, seed: u64) {
        self.dataset.subset_seed = seed;
        self.dataset.split_seed = seed;
        self.weights.seed = seed;
        self.training.seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let loaded = RunConfig::parse("[dataset]\nroot = \"/data\"\n", "cfg").unwrap();
        let c = loaded.config;
        assert_eq!(c.training.batch_size, 32);
        assert_eq!(c.training.epochs, 5);
        assert_eq!(c.training.learning_rate, 1e-4);
        assert_eq!(c.model.num_classes, 21);
        assert_eq!(c.model.input_size, 299);
        assert_eq!(c.dataset.subset_fraction, 0.2);
        assert!(loaded.notices.iter().any(|n| n.starts_with("training.batch_size")));
        assert!(!loaded.notices.iter().any(|n| n.starts_with("dataset.root")));
    }

    #[test]
    fn partial_sections_fill_in_defaults() {
        let text = "[dataset]\nroot = \"d\"\n[model]\nbackbone_name = \"stub\"\n[weights]\nrandom_fallback = true\n";
        let loaded = RunConfig::parse(text, "cfg").unwrap();
        assert!(loaded.config.weights.random_fallback);
        assert_eq!(loaded.config.weights.seed, 0);
        assert_eq!(loaded.config.model.head_dense_units, 256);
        assert!(loaded.notices.iter().any(|n| n.starts_with("weights.seed")));
    }

    #[test]
    fn freeze_policy_forms() {
        use crate::model::FreezePolicy;
        for (text, want) in [
            ("\"freeze_backbone\"", FreezePolicy::FreezeBackbone),
            ("\"unfreeze_all\"", FreezePolicy::UnfreezeAll),
            ("{ unfreeze_top_n = 2 }", FreezePolicy::UnfreezeTopN(2)),
        ] {
            let doc = format!("[dataset]\nroot = \"d\"\n[model]\nfreeze_policy = {text}\n");
            let c = RunConfig::parse(&doc, "cfg").unwrap().config;
            assert_eq!(c.model.freeze_policy, want);
            assert_eq!(RunConfig::parse(&c.to_toml(), "cfg").unwrap().config, c);
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = RunConfig::parse("[dataset]\nroot = \"/d\"\n[training]\nbatchsize = 3\n", "cfg").unwrap_err();
        match e {
            Error::Parse { line: Some(4), message, .. } => assert!(message.contains("batchsize"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_root_is_named() {
        let e = RunConfig::parse("[training]\nepochs = 2\n", "cfg").unwrap_err();
        assert!(e.to_string().contains("dataset"), "{e}");
    }

    #[test]
    fn zero_batch_size_fails_validation() {
        let e = RunConfig::parse("[dataset]\nroot = \"/d\"\n[training]\nbatch_size = 0\n", "cfg").unwrap_err();
        assert!(matches!(e, Error::InvalidArgument(m) if m.contains("batch_size")));
    }
}
