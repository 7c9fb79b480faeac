//! Model checkpoints: magic `RNDC`, version `u16`, metadata length `u32`,
//! TOML metadata, network count `u32`, then one `f64` `RNDT` parameter
//! vector per network (predictor first, then `g_0..=g_b`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::{format_err, Reader, Tensor, TensorData};
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkProfile};
use crate::trainer::{RndModel, TrainConfig};

const MAGIC: &[u8; 4] = b"RNDC";
const VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_train_loss: Option<f64>,
    predictor_seed: u64,
    target_seeds: Vec<u64>,
    config: TrainConfig,
    predictor: NetworkProfile,
    targets: Vec<NetworkProfile>,
}

pub fn checkpoint_bytes(model: &RndModel) -> Result<Vec<u8>> {
    model.validate()?;
    let meta = Meta {
        fingerprint: model.fingerprint.clone(),
        mean_train_loss: model.mean_train_loss,
        predictor_seed: model.config.predictor_seed(),
        target_seeds: (0..model.targets.len()).map(|i| model.config.target_seed(i)).collect(),
        config: model.config.clone(),
        predictor: model.predictor.profile().clone(),
        targets: model.targets.iter().map(|t| t.profile().clone()).collect(),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::invalid(format!("checkpoint metadata: {e}")))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let nets: Vec<&Network> = std::iter::once(&model.predictor).chain(&model.targets).collect();
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for n in nets {
        let t = Tensor::new(vec![n.param_count() as u32], TensorData::F64(n.params().to_vec()))?;
        out.extend_from_slice(&t.encode());
    }
    Ok(out)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<RndModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(format_err(0, "not a checkpoint (bad magic)"));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(format_err(4, format!("unsupported checkpoint version {version}")));
    }
    let len = u32::from_le_bytes(r.take(4, "metadata length")?.try_into().expect("4 bytes")) as usize;
    let meta_start = r.pos;
    let text = std::str::from_utf8(r.take(len, "metadata")?).map_err(|_| format_err(meta_start, "metadata is not UTF-8"))?;
    let meta: Meta = toml::from_str(text).map_err(|e| format_err(meta_start, format!("metadata: {e}")))?;
    let count = u32::from_le_bytes(r.take(4, "network count")?.try_into().expect("4 bytes")) as usize;
    if count != meta.targets.len() + 1 {
        return Err(format_err(r.pos - 4, format!("{count} networks for {} targets", meta.targets.len())));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.pos;
        let (t, used) = Tensor::decode_prefix(&bytes[r.pos..]).map_err(|e| match e {
            Error::Format { offset, message } => format_err(at + offset, message),
            other => other,
        })?;
        r.pos += used;
        match t.data {
            TensorData::F64(v) => params.push(v),
            _ => return Err(format_err(at + 6, "parameters must be f64")),
        }
    }
    if r.pos != bytes.len() {
        return Err(format_err(r.pos, "trailing bytes after checkpoint"));
    }
    let mut params = params.into_iter();
    let predictor = Network::from_params(meta.predictor, params.next().expect("count >= 1"), false)?;
    let targets = meta
        .targets
        .into_iter()
        .zip(params)
        .map(|(p, v)| Network::from_params(p, v, true))
        .collect::<Result<Vec<_>>>()?;
    let model = RndModel {
        config: meta.config,
        predictor,
        targets,
        mean_train_loss: meta.mean_train_loss,
        fingerprint: meta.fingerprint,
    };
    model.validate()?;
    Ok(model)
}

pub fn write_checkpoint(path: &Path, model: &RndModel) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<RndModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}
