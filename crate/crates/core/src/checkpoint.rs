//! Checkpoint persistence: a single file holding a JSON header (format
//! version, config snapshot, episode counter, architecture, RNG stream
//! positions) followed by raw little-endian 64-bit arrays.
//!
//! Array order after the header line: normalizer mean, normalizer std,
//! then the network in [`NetworkParams::to_flat`] order (per trunk layer
//! W row-major, b, gamma, beta, running_mean, running_var; value head W,
//! b; advantage head W, b). The encoding is bit-exact: save, load, save
//! reproduces identical bytes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::nn::{ArchSpec, NetworkParams};
use crate::rngs::StreamPos;
use crate::statecodec::Normalizer;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint header error: {0}")]
    Header(#[from] serde_json::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

/// JSON header of a checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: RunConfig,
    pub episode: u64,
    pub arch: ArchSpec,
    pub rng_streams: Vec<StreamPos>,
    pub normalizer_len: usize,
    pub params_len: usize,
}

/// A loaded checkpoint: the persisted policy and how it was produced.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub normalizer: Normalizer,
    pub params: NetworkParams,
}

/// Serializes a checkpoint to bytes.
pub fn to_bytes(
    config: &RunConfig,
    episode: u64,
    rng_streams: Vec<StreamPos>,
    normalizer: &Normalizer,
    params: &NetworkParams,
) -> Result<Vec<u8>, CheckpointError> {
    let flat = params.to_flat();
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        episode,
        arch: params.arch(),
        rng_streams,
        normalizer_len: normalizer.mean.len(),
        params_len: flat.len(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for v in normalizer
        .mean
        .iter()
        .chain(normalizer.std.iter())
        .chain(flat.iter())
    {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn save(
    path: &Path,
    config: &RunConfig,
    episode: u64,
    rng_streams: Vec<StreamPos>,
    normalizer: &Normalizer,
    params: &NetworkParams,
) -> Result<(), CheckpointError> {
    let bytes = to_bytes(config, episode, rng_streams, normalizer, params)?;
    // Write-then-rename so an interrupted run never clobbers the previous
    // checkpoint.
    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| CheckpointError::Format("missing header terminator".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let body = &bytes[newline + 1..];
    let expected = 2 * header.normalizer_len + header.params_len;
    if body.len() != expected * 8 {
        return Err(CheckpointError::Format(format!(
            "expected {} bytes of arrays, found {}",
            expected * 8,
            body.len()
        )));
    }
    let mut values = Vec::with_capacity(expected);
    for chunk in body.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let (mean, rest) = values.split_at(header.normalizer_len);
    let (std, flat) = rest.split_at(header.normalizer_len);
    let params = NetworkParams::from_flat(&header.arch, flat).map_err(CheckpointError::Format)?;
    Ok(Checkpoint {
        normalizer: Normalizer {
            mean: mean.to_vec(),
            std: std.to_vec(),
        },
        params,
        header,
    })
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    from_bytes(&std::fs::read(path)?)
}

/// Writes normalization statistics as a small JSON file.
pub fn save_normalizer(path: &Path, n: &Normalizer) -> Result<(), CheckpointError> {
    Ok(std::fs::write(path, serde_json::to_vec(n)?)?)
}

pub fn load_normalizer(path: &Path) -> Result<Normalizer, CheckpointError> {
    let n: Normalizer = serde_json::from_slice(&std::fs::read(path)?)?;
    if n.mean.len() != n.std.len() {
        return Err(CheckpointError::Format(
            "normalizer mean/std length mismatch".into(),
        ));
    }
    Ok(n)
}
