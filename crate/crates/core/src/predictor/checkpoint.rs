//! Weight checkpoints: `u32` LE header length, a JSON header, then every tensor as
//! float32 little-endian in declared order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Architecture, Predictor, TensorSpec};
use crate::elastodynamics::MaterialRanges;
use crate::error::{Error, Result};
use crate::filterbank::Topology;
use crate::spectral::SpectralConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub architecture: Architecture,
    pub topology: Topology,
    pub ranges: MaterialRanges,
    pub spectral: SpectralConfig,
    pub seed: u64,
    pub tensors: Vec<TensorSpec>,
}

pub fn write_checkpoint<W: Write>(model: &Predictor, mut w: W) -> Result<()> {
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        architecture: model.arch.clone(),
        topology: model.topology(),
        ranges: model.ranges,
        spectral: model.spectral,
        seed: model.seed,
        tensors: model.arch.tensors(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(model.weights.len() * 4);
    for &v in &model.weights {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Predictor> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(Error::Format(format!("checkpoint header of {len} bytes is implausible")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", header.version)));
    }
    if header.topology != header.architecture.topology || header.tensors != header.architecture.tensors() {
        return Err(Error::Format("checkpoint tensor list disagrees with its architecture".into()));
    }
    let n: usize = header.tensors.iter().map(TensorSpec::len).sum();
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != 4 * n {
        return Err(Error::Format(format!("expected {} weight bytes, found {}", 4 * n, raw.len())));
    }
    let weights = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    if !raw.chunks_exact(4).all(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]).is_finite()) {
        return Err(Error::Format("checkpoint contains non-finite weights".into()));
    }
    Predictor::from_weights(header.architecture, header.ranges, header.spectral, header.seed, weights)
}

pub fn save_checkpoint(model: &Predictor, path: impl AsRef<Path>) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(model, f)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Predictor> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}
