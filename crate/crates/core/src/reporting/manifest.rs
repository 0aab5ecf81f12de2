use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run_dir::RunDir;
use crate::config::RunConfig;
use crate::dataset::line_of;
use crate::error::{Error, Result};

pub const SPLIT_RULE: &str = "stratified";

/// Everything needed to re-run a training run. Written before training
/// starts; afterwards only `checkpoints` may grow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    pub timestamp: String,
    pub artifact_version: String,
    pub taxonomy_hash: String,
    pub split_rule: String,
    pub train_samples: usize,
    pub val_samples: usize,
    pub train_index: PathBuf,
    pub val_index: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub config: RunConfig,
}

impl RunManifest {
    /// Equal in everything except run identity and checkpoint list.
    pub fn same_run_as(&self, other: &RunManifest) -> bool {
        let strip = |m: &RunManifest| RunManifest {
            run_id: String::new(),
            timestamp: String::new(),
            checkpoints: Vec::new(),
            ..m.clone()
        };
        strip(self) == strip(other)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: line_of(text, e.span().map(|s| s.start)),
            message: e.message().to_string(),
        })
    }
}

/// Writes `<run_dir>/manifest`. An existing manifest may only be replaced
/// by one that extends its checkpoint list.
pub fn write_manifest(run_dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = RunDir::new(run_dir).manifest();
    if path.exists() {
        let existing = read_manifest(run_dir)?;
        let extends = existing.run_id == manifest.run_id
            && existing.timestamp == manifest.timestamp
            && existing.same_run_as(manifest)
            && manifest.checkpoints.starts_with(&existing.checkpoints);
        if !extends {
            return Err(Error::invalid(format!(
                "{} already exists; manifests are append-only",
                path.display()
            )));
        }
    }
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    std::fs::write(&path, manifest.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest> {
    let path = RunDir::new(run_dir).manifest();
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    RunManifest::parse(&text, &path.display().to_string())
}

pub fn append_checkpoint(run_dir: &Path, checkpoint: &Path) -> Result<RunManifest> {
    let mut m = read_manifest(run_dir)?;
    m.checkpoints.push(checkpoint.to_path_buf());
    write_manifest(run_dir, &m)?;
    Ok(m)
}
