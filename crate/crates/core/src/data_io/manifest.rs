use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::{synth_generate, SynthKind};
use crate::error::{Error, Result};
use crate::tensor::{Dataset, Shape};

/// Validation OOD sets hold at most this many leading test-OOD images.
pub const VAL_OOD_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetRole {
    Train,
    TestIn,
    TestOod,
    ValOod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Container {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<PathBuf>,
    },
    /// CIFAR-10 binary batches, concatenated in order.
    CifarBinary { paths: Vec<PathBuf> },
    Synthetic { generator: SynthKind },
}

/// One dataset description, stored as TOML. Relative paths resolve against
/// the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub role: DatasetRole,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ler: Option<f64>,
    /// `[height, width]` to resample to after loading.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resize: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
    pub source: DatasetSource,
}

impl DatasetManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid(format!("manifest {}: count must be > 0", self.name)));
        }
        if self.role == DatasetRole::ValOod && self.count > VAL_OOD_LIMIT {
            return Err(Error::invalid(format!(
                "manifest {}: validation OOD sets hold at most {VAL_OOD_LIMIT} images",
                self.name
            )));
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads the first `count` images named by `manifest`.
pub fn load_dataset(manifest: &DatasetManifest, base_dir: &Path) -> Result<Dataset> {
    manifest.validate()?;
    let full = match &manifest.source {
        DatasetSource::Container { path, labels } => {
            let mut d = super::read_dataset(&resolve(base_dir, path))?;
            if let Some(l) = labels {
                d = Dataset::with_labels(d.images, Some(super::read_labels(&resolve(base_dir, l))?))?;
            }
            d
        }
        DatasetSource::CifarBinary { paths } => {
            let mut images = Vec::new();
            let mut labels = Vec::new();
            for p in paths {
                let p = resolve(base_dir, p);
                let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
                let d = super::parse_cifar_binary(&bytes)?;
                labels.extend(d.labels.unwrap_or_default());
                images.extend(d.images);
            }
            Dataset::with_labels(images, Some(labels))?
        }
        DatasetSource::Synthetic { generator } => {
            let shape = manifest
                .shape
                .ok_or_else(|| Error::invalid(format!("manifest {}: synthetic source needs a shape", manifest.name)))?;
            synth_generate(*generator, manifest.count, shape, manifest.seed)?.0
        }
    };
    if manifest.count > full.len() {
        return Err(Error::invalid(format!(
            "manifest {} asks for {} images but the source has {}",
            manifest.name,
            manifest.count,
            full.len()
        )));
    }
    let mut d = full.take(manifest.count);
    if let Some([h, w]) = manifest.resize {
        d = super::resize_dataset(&d, h, w)?;
    }
    if let (Some(want), Some(got)) = (manifest.shape, d.shape()) {
        if want != got {
            return Err(Error::shape(want, got));
        }
    }
    Ok(d)
}
