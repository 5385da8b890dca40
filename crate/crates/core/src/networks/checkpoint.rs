//! Single-file checkpoint container.
//!
//! Layout: the 8-byte magic `DIRCKPT1`, a little-endian `u32` header length,
//! a JSON header, then every tensor as raw little-endian `f64` in header order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bundle::{ModelBundle, ModelConfig, NetId};
use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::nn::Adam;

const MAGIC: &[u8; 8] = b"DIRCKPT1";
pub const FORMAT_VERSION: u32 = 1;

/// Optimiser moments for one parameter set.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub net: NetId,
    pub adam: Adam,
}

/// Training progress stored alongside the parameters.
#[derive(Debug, Clone, Default)]
pub struct TrainingState {
    pub stage: u8,
    pub epochs_done: usize,
    pub step: usize,
    pub training_config: serde_json::Value,
    pub optimizers: Vec<OptimizerState>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    frozen: Vec<NetId>,
    stage: u8,
    epochs_done: usize,
    step: usize,
    training_config: serde_json::Value,
    optimizer_steps: BTreeMap<NetId, u64>,
    checksums: BTreeMap<NetId, String>,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(path: &Path, bundle: &ModelBundle, state: &TrainingState) -> Result<()> {
    let mut entries = Vec::new();
    let mut payload: Vec<&Tensor> = Vec::new();
    for net in NetId::ALL {
        for p in bundle.params(net).params() {
            entries.push(TensorEntry {
                name: format!("params/{net}/{}", p.name),
                shape: p.value.shape().to_vec(),
            });
            payload.push(&p.value);
        }
    }
    let mut optimizer_steps = BTreeMap::new();
    for opt in &state.optimizers {
        optimizer_steps.insert(opt.net, opt.adam.step);
        let (m, v) = opt.adam.moments();
        for (kind, list) in [("m", m), ("v", v)] {
            for (i, t) in list.iter().enumerate() {
                entries.push(TensorEntry {
                    name: format!("opt/{}/{kind}/{i}", opt.net),
                    shape: t.shape().to_vec(),
                });
                payload.push(t);
            }
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        model: bundle.config.clone(),
        frozen: NetId::ALL.into_iter().filter(|n| bundle.is_frozen(*n)).collect(),
        stage: state.stage,
        epochs_done: state.epochs_done,
        step: state.step,
        training_config: state.training_config.clone(),
        optimizer_steps,
        checksums: NetId::ALL.into_iter().map(|n| (n, bundle.params(n).checksum())).collect(),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header)?;
    let total: usize = payload.iter().map(|t| t.numel()).sum();
    let mut bytes = Vec::with_capacity(12 + json.len() + 8 * total);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    for t in payload {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelBundle, TrainingState)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_bytes = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {}", header.format_version)));
    }
    let mut bundle = ModelBundle::new(&header.model)?;
    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut offset = 12 + hlen;
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        let chunk = bytes.get(offset..offset + 8 * n).ok_or_else(|| bad("truncated payload"))?;
        let data = chunk.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.insert(e.name.clone(), Tensor::new(e.shape.clone(), data));
        offset += 8 * n;
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after payload"));
    }
    for net in NetId::ALL {
        for p in bundle.params_mut_unchecked(net).params_mut() {
            let key = format!("params/{net}/{}", p.name);
            let t = tensors.remove(&key).ok_or_else(|| bad(&format!("missing tensor {key}")))?;
            if t.shape() != p.value.shape() {
                return Err(bad(&format!("shape mismatch for {key}")));
            }
            p.value = t;
        }
        if let Some(expected) = header.checksums.get(&net) {
            if &bundle.params(net).checksum() != expected {
                return Err(bad(&format!("checksum mismatch for {net}")));
            }
        }
    }
    let mut optimizers = Vec::new();
    for (&net, &step) in &header.optimizer_steps {
        let count = bundle.params(net).len();
        let mut take = |kind: &str| -> Result<Vec<Tensor>> {
            (0..count)
                .map(|i| {
                    let key = format!("opt/{net}/{kind}/{i}");
                    tensors.remove(&key).ok_or_else(|| bad(&format!("missing tensor {key}")))
                })
                .collect()
        };
        let (m, v) = (take("m")?, take("v")?);
        optimizers.push(OptimizerState {
            net,
            adam: Adam::from_moments(step, m, v),
        });
    }
    let names: Vec<&str> = header.frozen.iter().map(|n| n.as_str()).collect();
    bundle.freeze(&names)?;
    Ok((
        bundle,
        TrainingState {
            stage: header.stage,
            epochs_done: header.epochs_done,
            step: header.step,
            training_config: header.training_config,
            optimizers,
        },
    ))
}
