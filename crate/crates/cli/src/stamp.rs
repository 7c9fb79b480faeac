use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance written next to every output as `<output>.stamp.toml`.
#[derive(Debug, Serialize)]
pub struct Stamp {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// SHA-256 of the configuration text or of the argument list.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputDigest>,
    pub output_sha256: String,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| svdrnd::Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn write_output(out: &Path, bytes: &[u8], command: &str, config_hash: String, seeds: Vec<u64>, inputs: &[&Path]) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| svdrnd::Error::io(dir, e))?;
    }
    std::fs::write(out, bytes).map_err(|e| svdrnd::Error::io(out, e))?;
    let stamp = Stamp {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        config_hash,
        seeds,
        inputs: inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: file_digest(p)?,
                })
            })
            .collect::<Result<_>>()?,
        output_sha256: sha256_hex(bytes),
    };
    let mut name = out.as_os_str().to_owned();
    name.push(".stamp.toml");
    let path = Path::new(&name);
    let text = toml::to_string(&stamp).expect("stamp serializes");
    std::fs::write(path, text).map_err(|e| svdrnd::Error::io(path, e))?;
    Ok(())
}
