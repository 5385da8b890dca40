use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentRole {
    Dir,
    Dfr,
    Pilot,
    Refined,
    Joint,
}

/// JSON sidecar describing a raw latent dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentHeader {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub role: LatentRole,
    pub source: String,
}

fn header_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes `tensor` as little-endian `f32` to `bin` and its header beside it (`.json`).
pub fn write_latent(bin: &Path, tensor: &Tensor, role: LatentRole, source: &str) -> Result<()> {
    let bytes: Vec<u8> = tensor.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(bin, bytes).map_err(|e| Error::io(bin, e))?;
    let header = LatentHeader {
        shape: tensor.shape().to_vec(),
        dtype: "f32le".into(),
        role,
        source: source.into(),
    };
    let hp = header_path(bin);
    fs::write(&hp, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&hp, e))
}

pub fn read_latent(bin: &Path) -> Result<(LatentHeader, Tensor)> {
    let hp = header_path(bin);
    let header: LatentHeader =
        serde_json::from_str(&fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?)?;
    let bytes = fs::read(bin).map_err(|e| Error::io(bin, e))?;
    let n: usize = header.shape.iter().product();
    if bytes.len() != 4 * n {
        return Err(Error::Input(format!(
            "{} holds {} bytes, header promises {n} floats",
            bin.display(),
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let t = Tensor::new(header.shape.clone(), data);
    Ok((header, t))
}
