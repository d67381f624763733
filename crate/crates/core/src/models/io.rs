use std::io::{Read, Write};
use std::path::Path;

use highlighter_nn::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, ModelConfig};
use crate::{fsutil, Error, Result};

pub const MAGIC: &[u8; 8] = b"PMHL0001";
const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    byte_offset: u64,
    byte_len: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u64,
    #[serde(flatten)]
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    /// Hex SHA-256 of the blob; checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blob_sha256: Option<String>,
}

fn blob_digest(blob: &[u8]) -> String {
    Sha256::digest(blob).iter().map(|b| format!("{b:02x}")).collect()
}

/// Magic, little-endian `u64` header length, JSON header, then every
/// tensor as contiguous little-endian `f32` in header order.
pub fn write_model<W: Write>(model: &Model, mut w: W) -> std::io::Result<()> {
    let mut tensors = Vec::new();
    let mut offset = 0u64;
    for (_, p) in model.params().iter() {
        let byte_len = 4 * p.value.numel() as u64;
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            dtype: "f32".into(),
            byte_offset: offset,
            byte_len,
        });
        offset += byte_len;
    }
    let mut blob = Vec::with_capacity(offset as usize);
    for (_, p) in model.params().iter() {
        for v in p.value.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config().clone(),
        tensors,
        blob_sha256: Some(blob_digest(&blob)),
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&blob)
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model> {
    let corrupt = |m: String| Error::CorruptModel(m);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| corrupt(e.to_string()))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing PMHL0001 magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = 16usize
        .checked_add(usize::try_from(header_len).map_err(|_| corrupt("header length overflow".into()))?)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| corrupt(format!("header length {header_len} exceeds file size {}", bytes.len())))?;
    let raw: serde_json::Value =
        serde_json::from_slice(&bytes[16..header_end]).map_err(|e| corrupt(format!("header is not JSON: {e}")))?;
    let version = raw
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| corrupt("header has no format_version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| corrupt(format!("bad header: {e}")))?;
    let blob = &bytes[header_end..];
    if let Some(want) = &header.blob_sha256 {
        if !want.eq_ignore_ascii_case(&blob_digest(blob)) {
            return Err(corrupt("tensor data does not match its checksum".into()));
        }
    }

    let mut model = Model::<f32>::new(header.config, 0)?;
    let expected: Vec<(String, Vec<usize>)> =
        model.params().iter().map(|(_, p)| (p.name.clone(), p.value.shape().to_vec())).collect();
    if header.tensors.len() != expected.len() {
        return Err(corrupt(format!("{} tensors listed, architecture has {}", header.tensors.len(), expected.len())));
    }
    let mut offset = 0u64;
    for (entry, (name, shape)) in header.tensors.iter().zip(&expected) {
        if &entry.name != name {
            return Err(corrupt(format!("expected tensor `{name}`, found `{}`", entry.name)));
        }
        if &entry.shape != shape {
            return Err(Error::ShapeMismatch {
                name: name.clone(),
                found: entry.shape.clone(),
                expected: shape.clone(),
            });
        }
        let numel: usize = shape.iter().product();
        if entry.dtype != "f32" || entry.byte_offset != offset || entry.byte_len != 4 * numel as u64 {
            return Err(corrupt(format!("tensor `{name}` has an inconsistent dtype, offset or length")));
        }
        let start = offset as usize;
        let end = start + 4 * numel;
        let Some(raw) = blob.get(start..end) else {
            return Err(corrupt(format!("blob truncated inside tensor `{name}`")));
        };
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        let value = Tensor::new(shape, data).map_err(|e| corrupt(format!("tensor `{name}`: {e}")))?;
        let id = model.params().id(name)?;
        model.params_mut().set(id, value)?;
        offset += entry.byte_len;
    }
    if offset as usize != blob.len() {
        return Err(corrupt(format!("{} trailing bytes after the last tensor", blob.len() - offset as usize)));
    }
    Ok(model)
}

/// Writes through a temporary file in the destination directory, so a
/// failure never leaves a partial model behind.
pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fsutil::write_atomic(path.as_ref(), |w| write_model(model, w))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(f))
}
