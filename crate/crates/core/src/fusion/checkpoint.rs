//! Weight checkpoints.
//!
//! Layout (little endian): `b"SFCK"`, u32 format version, u32 metadata length,
//! metadata JSON, u32 tensor count, then per tensor: u32 name length, name,
//! u32 rank, u32 per dimension, f64 data row-major.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{AttentionVariant, FusionModel, Modality};
use super::params::{FusionParams, ModelDims};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SFCK";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    dims: ModelDims,
    variant: AttentionVariant,
    modality: Modality,
    dropout: f64,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint(model: &FusionModel) -> Vec<u8> {
    let meta = serde_json::to_vec(&Meta {
        dims: model.dims,
        variant: model.variant,
        modality: model.modality,
        dropout: model.params.head.dropout,
    })
    .expect("metadata serializes");
    let tensors = model.params.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize);
    put_u32(&mut out, meta.len());
    out.extend_from_slice(&meta);
    put_u32(&mut out, tensors.len());
    for (name, shape, data) in tensors {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, shape.len());
        for d in shape {
            put_u32(&mut out, d);
        }
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<usize> {
        let mut b = [0u8; 4];
        self.0
            .read_exact(&mut b)
            .map_err(|_| Error::Checkpoint("truncated checkpoint".into()))?;
        Ok(u32::from_le_bytes(b) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<FusionModel> {
    let mut r = Reader(bytes);
    if r.bytes(4)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = r.u32()?;
    let meta: Meta = serde_json::from_slice(r.bytes(meta_len)?)
        .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
    let mut model = FusionModel::new(meta.dims, meta.variant, meta.modality, meta.dropout, 0)?;
    let expected: Vec<(&'static str, Vec<usize>)> = model
        .params
        .tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    let count = r.u32()?;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {count}",
            expected.len()
        )));
    }
    let mut slices = model.params.slices_mut();
    for ((want_name, want_shape), (_, dst)) in expected.iter().zip(slices.iter_mut()) {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.bytes(name_len)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if name != *want_name {
            return Err(Error::Checkpoint(format!("expected tensor `{want_name}`, found `{name}`")));
        }
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if &shape != want_shape {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has shape {shape:?}, expected {want_shape:?}"
            )));
        }
        let data = r.bytes(dst.len() * 8)?;
        for (d, c) in dst.iter_mut().zip(data.chunks_exact(8)) {
            *d = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        }
    }
    drop(slices);
    if !r.0.is_empty() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &FusionModel, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FusionModel> {
    decode_checkpoint(&std::fs::read(path)?)
}

/// Parameters are named in the checkpoint; this lists them for inspection.
pub fn tensor_names(params: &FusionParams) -> Vec<&'static str> {
    params.tensors().into_iter().map(|(n, _, _)| n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> FusionModel {
        let dims = ModelDims {
            text_in: 6,
            feature: 4,
            d_k: 3,
            hidden: 5,
        };
        FusionModel::new(dims, AttentionVariant::CrossSkip, Modality::TextAudio, 0.5, 9).unwrap()
    }

    #[test]
    fn round_trip_is_exact_and_deterministic() {
        let m = model();
        let bytes = encode_checkpoint(&m);
        assert_eq!(bytes, encode_checkpoint(&m));
        assert_eq!(decode_checkpoint(&bytes).unwrap(), m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ckpt");
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), m);
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let bytes = encode_checkpoint(&model());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        assert!(decode_checkpoint(b"XXXX").is_err());
    }

    #[test]
    fn names_cover_every_tensor() {
        let names = tensor_names(&model().params);
        assert_eq!(names, FusionParams::TENSOR_NAMES);
    }
}
