//! Model files.
//!
//! Networks use the AICN container:
//!
//! ```text
//! "AICN" | u32 version | u32 header length | JSON header | f64 LE parameters
//! ```
//!
//! Parameters follow layer order, weights before bias. The header carries
//! the architecture, its SHA-256 hash, and per-layer frozen flags; loading
//! recomputes the hash and refuses a mismatch.
//!
//! SVM models use the same framing with magic `"AISV"`; the blob holds the
//! standardized support vectors row by row.

use std::path::Path;

use coughscreen_core::classifiers::NetKind;
use coughscreen_core::nn::{Architecture, Network, NnError, Params, Real};
use coughscreen_core::svm::{Kernel, PairModel, Standardizer, SvmModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const NET_MAGIC: &[u8; 4] = b"AICN";
pub const SVM_MAGIC: &[u8; 4] = b"AISV";
pub const FORMAT_VERSION: u32 = 1;
pub const SVM_FILE_NAME: &str = "cml_mc.svmmodel";

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated")]
    Truncated,
    #[error("trailing bytes after parameter blob")]
    TrailingBytes,
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("architecture hash mismatch: header {stored}, computed {computed}")]
    HashMismatch { stored: String, computed: String },
    #[error("architecture {found} does not match the expected {expected}")]
    ArchitectureMismatch { expected: String, found: String },
    #[error(transparent)]
    Network(#[from] NnError),
    #[error("invalid SVM model: {0}")]
    InvalidSvm(&'static str),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Serialize, Deserialize)]
struct NetHeader {
    kind: Option<NetKind>,
    architecture: Architecture,
    architecture_hash: String,
    frozen: Vec<bool>,
    parameter_count: usize,
}

fn frame(magic: &[u8; 4], header: &[u8], blob_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + header.len() + blob_len);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    out
}

fn unframe<'a>(bytes: &'a [u8], magic: &'static [u8; 4]) -> Result<(&'a [u8], &'a [u8]), ModelIoError> {
    if bytes.len() < 12 {
        return Err(ModelIoError::Truncated);
    }
    if &bytes[..4] != magic {
        return Err(ModelIoError::BadMagic { expected: std::str::from_utf8(magic).unwrap_or("?") });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion(version));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let rest = &bytes[12..];
    if rest.len() < len {
        return Err(ModelIoError::Truncated);
    }
    Ok(rest.split_at(len))
}

fn read_f64s(blob: &mut &[u8], n: usize) -> Result<Vec<f64>, ModelIoError> {
    if blob.len() < n * 8 {
        return Err(ModelIoError::Truncated);
    }
    let (head, tail) = blob.split_at(n * 8);
    *blob = tail;
    Ok(head.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Serializes a network; parameters are widened to f64.
pub fn encode_network<S: Real>(net: &Network<S>, kind: Option<NetKind>) -> Vec<u8> {
    let header = NetHeader {
        kind,
        architecture: net.architecture().clone(),
        architecture_hash: net.architecture().hash(),
        frozen: net.frozen_flags().to_vec(),
        parameter_count: net.param_count(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = frame(NET_MAGIC, &header, net.param_count() * 8);
    for p in net.params().iter().flatten() {
        for v in p.iter() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

/// Parses a network and verifies its architecture hash.
pub fn decode_network<S: Real>(bytes: &[u8]) -> Result<(Network<S>, Option<NetKind>), ModelIoError> {
    let (header, mut blob) = unframe(bytes, NET_MAGIC)?;
    let header: NetHeader = serde_json::from_slice(header)?;
    let computed = header.architecture.hash();
    if computed != header.architecture_hash {
        return Err(ModelIoError::HashMismatch { stored: header.architecture_hash, computed });
    }
    let shapes = header.architecture.shapes()?;
    let mut params = Vec::with_capacity(header.architecture.layers.len());
    for (spec, input) in header.architecture.layers.iter().zip(&shapes) {
        let sizes = match *spec {
            coughscreen_core::nn::LayerSpec::Conv2d { filters, kernel } => {
                Some((filters * input.channels * kernel * kernel, filters))
            }
            coughscreen_core::nn::LayerSpec::Dense { units } => Some((units * input.len(), units)),
            _ => None,
        };
        params.push(match sizes {
            Some((nw, nb)) => {
                let weights = read_f64s(&mut blob, nw)?.into_iter().map(S::from_f64).collect();
                let bias = read_f64s(&mut blob, nb)?.into_iter().map(S::from_f64).collect();
                Some(Params { weights, bias })
            }
            None => None,
        });
    }
    if !blob.is_empty() {
        return Err(ModelIoError::TrailingBytes);
    }
    Ok((Network::from_parts(header.architecture, params, header.frozen)?, header.kind))
}

/// Like [`decode_network`], additionally requiring a specific architecture.
pub fn decode_network_expecting<S: Real>(bytes: &[u8], expected: &Architecture) -> Result<Network<S>, ModelIoError> {
    let (net, _) = decode_network::<S>(bytes)?;
    if net.architecture().hash() != expected.hash() {
        return Err(ModelIoError::ArchitectureMismatch { expected: expected.hash(), found: net.architecture().hash() });
    }
    Ok(net)
}

#[derive(Serialize, Deserialize)]
struct SvmHeader {
    kernel: Kernel,
    c: f64,
    gamma: Option<f64>,
    classes: Vec<usize>,
    standardization: Standardizer,
    dim: usize,
    support_vector_count: usize,
    pairs: Vec<PairModel>,
}

pub fn encode_svm(model: &SvmModel) -> Vec<u8> {
    let header = SvmHeader {
        kernel: model.kernel,
        c: model.c,
        gamma: match model.kernel {
            Kernel::Rbf { gamma } => Some(gamma),
            Kernel::Linear => None,
        },
        classes: model.classes.clone(),
        standardization: model.standardizer.clone(),
        dim: model.dim(),
        support_vector_count: model.support_vectors.len(),
        pairs: model.pairs.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = frame(SVM_MAGIC, &header, model.support_vectors.len() * model.dim() * 8);
    for sv in &model.support_vectors {
        for v in sv {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_svm(bytes: &[u8]) -> Result<SvmModel, ModelIoError> {
    let (header, mut blob) = unframe(bytes, SVM_MAGIC)?;
    let h: SvmHeader = serde_json::from_slice(header)?;
    if h.standardization.mean.len() != h.dim || h.standardization.std.len() != h.dim {
        return Err(ModelIoError::InvalidSvm("standardization length differs from dimension"));
    }
    let mut support_vectors = Vec::with_capacity(h.support_vector_count);
    for _ in 0..h.support_vector_count {
        support_vectors.push(read_f64s(&mut blob, h.dim)?);
    }
    if !blob.is_empty() {
        return Err(ModelIoError::TrailingBytes);
    }
    for p in &h.pairs {
        if p.support.len() != p.coef.len() || p.support.iter().any(|&s| s >= h.support_vector_count) {
            return Err(ModelIoError::InvalidSvm("pair references a missing support vector"));
        }
        if p.coef.iter().any(|a| a.abs() > h.c * (1.0 + 1e-12)) {
            return Err(ModelIoError::InvalidSvm("dual coefficient outside [0, C]"));
        }
    }
    Ok(SvmModel {
        kernel: h.kernel,
        c: h.c,
        classes: h.classes,
        standardizer: h.standardization,
        support_vectors,
        pairs: h.pairs,
    })
}

/// Short content hash used as a model version tag.
pub fn version_tag(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..6])
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelIoError + '_ {
    move |source| ModelIoError::Io { path: path.display().to_string(), source }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ModelIoError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, ModelIoError> {
    std::fs::read(path).map_err(io_err(path))
}

pub fn save_network<S: Real>(path: &Path, net: &Network<S>, kind: Option<NetKind>) -> Result<(), ModelIoError> {
    write_file(path, &encode_network(net, kind))
}

pub fn load_network<S: Real>(path: &Path) -> Result<Network<S>, ModelIoError> {
    Ok(decode_network(&read_file(path)?)?.0)
}

pub fn save_svm(path: &Path, model: &SvmModel) -> Result<(), ModelIoError> {
    write_file(path, &encode_svm(model))
}

pub fn load_svm(path: &Path) -> Result<SvmModel, ModelIoError> {
    decode_svm(&read_file(path)?)
}
