use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use svdrnd::data_io::{load_dataset, DatasetManifest};
use svdrnd::evaluation::SelectionMetric;
use svdrnd::trainer::TrainConfig;
use svdrnd::Dataset;

/// Environment variable that replaces the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "SVDRND_OUTPUT_DIR";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DataPaths {
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_in: Option<PathBuf>,
    #[serde(default)]
    pub test_ood: Vec<PathBuf>,
    /// Validation OOD manifests; defaults to the leading slice of each
    /// test OOD set.
    #[serde(default)]
    pub val_ood: Vec<PathBuf>,
}

fn default_metric() -> SelectionMetric {
    SelectionMetric::Tnr95
}

/// One experiment: data manifests, training recipe and selection metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_metric")]
    pub selection_metric: SelectionMetric,
    pub data: DataPaths,
    pub train: TrainConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    pub text: String,
}

impl ExperimentConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| svdrnd::Error::io(path, e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| svdrnd::Error::Config {
            path: path.to_path_buf(),
            message: e.to_string().trim().replace('\n', " "),
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.text = text;
        cfg.train.validate().with_context(|| format!("{}: train section", path.display()))?;
        for m in cfg.manifest_paths() {
            let full = cfg.resolve(&m);
            if !full.is_file() {
                return Err(svdrnd::Error::Config {
                    path: path.to_path_buf(),
                    message: format!("manifest {} not found", full.display()),
                }
                .into());
            }
        }
        Ok(cfg)
    }

    fn manifest_paths(&self) -> Vec<PathBuf> {
        let d = &self.data;
        std::iter::once(d.train.clone())
            .chain(d.test_in.clone())
            .chain(d.test_ood.iter().cloned())
            .chain(d.val_ood.iter().cloned())
            .collect()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load(&self, manifest: &Path) -> Result<Dataset> {
        let path = self.resolve(manifest);
        let m = DatasetManifest::read(&path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(load_dataset(&m, base).with_context(|| format!("loading {}", path.display()))?)
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.output_dir.as_ref().map(|d| self.resolve(d))
    }
}

/// Places a relative output path under the override directory, then the
/// configured one; absolute paths are kept.
pub fn output_path(out: &Path, configured: Option<&Path>) -> PathBuf {
    if out.is_absolute() {
        return out.to_path_buf();
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(out),
        _ => configured.map_or_else(|| out.to_path_buf(), |d| d.join(out)),
    }
}
