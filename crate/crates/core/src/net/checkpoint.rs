//! Binary checkpoint files.
//!
//! Layout: the 8-byte magic `IDTRCKPT`, a little-endian `u32` version, a
//! little-endian `u32` header length, a JSON header (architecture plus the
//! ordered shape table), then every tensor followed by the normalization
//! mean and std as little-endian `f64`. Round trips are bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Architecture, NetworkParams, Normalization, Weights};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"IDTRCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    arch: Architecture,
    tensors: Vec<TensorShape>,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct TensorShape {
    name: String,
    rows: usize,
    cols: usize,
}

fn shapes(weights: &Weights) -> Vec<TensorShape> {
    let mut v: Vec<TensorShape> = weights
        .tensors()
        .into_iter()
        .map(|t| TensorShape { name: t.name, rows: t.rows, cols: t.cols })
        .collect();
    let q = weights.layers.first().map_or(0, |l| l.input_dim);
    v.push(TensorShape { name: "norm.mean".into(), rows: q, cols: 1 });
    v.push(TensorShape { name: "norm.std".into(), rows: q, cols: 1 });
    v
}

pub fn encode_checkpoint(params: &NetworkParams) -> Result<Vec<u8>> {
    params.validate()?;
    let header = serde_json::to_vec(&Header { arch: params.arch, tensors: shapes(&params.weights) })
        .map_err(|e| Error::Invariant(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + header.len() + 8 * (params.weights.len() + 2 * params.norm.mean.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let payload = params
        .weights
        .tensors()
        .into_iter()
        .flat_map(|t| t.data.iter().copied().collect::<Vec<_>>())
        .chain(params.norm.mean.iter().copied())
        .chain(params.norm.std.iter().copied());
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<NetworkParams> {
    let bad = |r: &str| Error::format(path, r);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic or truncated header)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let header_bytes = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(header_bytes).map_err(|e| bad(&format!("header: {e}")))?;
    let arch = header.arch;
    arch.validate()?;
    let mut weights = Weights::zeros(&arch);
    if header.tensors != shapes(&weights) {
        return Err(bad("shape table does not match architecture"));
    }
    let q = arch.input_dim();
    let count = weights.len() + 2 * q;
    let payload = &bytes[16 + hlen..];
    if payload.len() != 8 * count {
        return Err(bad(&format!("payload has {} bytes, expected {}", payload.len(), 8 * count)));
    }
    let values: Vec<f64> =
        payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let nw = weights.len();
    weights.set_flat(&values[..nw])?;
    let norm = Normalization { mean: values[nw..nw + q].to_vec(), std: values[nw + q..].to_vec() };
    let params = NetworkParams { arch, weights, norm };
    params.validate()?;
    Ok(params)
}

pub fn save_checkpoint(params: &NetworkParams, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

/// Loads a checkpoint and refuses it unless it was trained for `(n, m)`.
pub fn load_checkpoint_for(path: &Path, n_robots: usize, max_detections: usize) -> Result<NetworkParams> {
    let p = load_checkpoint(path)?;
    if (p.arch.n_robots, p.arch.max_detections) != (n_robots, max_detections) {
        return Err(Error::Shape(format!(
            "checkpoint is for N={}, M={}, requested N={n_robots}, M={max_detections}",
            p.arch.n_robots, p.arch.max_detections
        )));
    }
    Ok(p)
}
