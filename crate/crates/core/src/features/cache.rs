//! Flat binary feature files.
//!
//! Layout (little endian):
//! `b"FEAT"`, u32 version, u32 rows, u32 cols, u32 id length, id bytes,
//! u32 adapter version length, version bytes, then rows × cols f32 row-major.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::augment::sha256_hex;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FEAT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub adapter_id: String,
    pub adapter_version: String,
    pub matrix: Array2<f32>,
}

impl FeatureFile {
    pub fn encode(&self) -> Vec<u8> {
        let (rows, cols) = self.matrix.dim();
        let mut out = Vec::with_capacity(24 + self.adapter_id.len() + rows * cols * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for s in [&self.adapter_id, &self.adapter_version] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        for v in self.matrix.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::FeatureFormat("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(Error::FeatureFormat("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::FeatureFormat(format!("unsupported version {version}")));
        }
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let adapter_id = read_str(&mut r)?;
        let adapter_version = read_str(&mut r)?;
        if r.len() != rows * cols * 4 {
            return Err(Error::FeatureFormat(format!(
                "expected {} payload bytes, found {}",
                rows * cols * 4,
                r.len()
            )));
        }
        let data = r
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let matrix = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::FeatureFormat(e.to_string()))?;
        Ok(Self {
            adapter_id,
            adapter_version,
            matrix,
        })
    }
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::FeatureFormat("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_str(r: &mut &[u8]) -> Result<String> {
    let n = read_u32(r)? as usize;
    if r.len() < n {
        return Err(Error::FeatureFormat("truncated string".into()));
    }
    let (s, rest) = r.split_at(n);
    *r = rest;
    String::from_utf8(s.to_vec()).map_err(|e| Error::FeatureFormat(e.to_string()))
}

/// Directory of feature files keyed by (sample id, adapter id, adapter version).
#[derive(Debug, Clone)]
pub struct FeatureCache {
    root: PathBuf,
}

impl FeatureCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, sample_id: &str, adapter_id: &str, adapter_version: &str) -> PathBuf {
        let h = sha256_hex(format!("{sample_id}\0{adapter_id}\0{adapter_version}").as_bytes());
        self.root.join(&h[..2]).join(format!("{h}.feat"))
    }

    pub fn get(
        &self,
        sample_id: &str,
        adapter_id: &str,
        adapter_version: &str,
    ) -> Result<Option<Array2<f64>>> {
        let path = self.path_for(sample_id, adapter_id, adapter_version);
        if !path.is_file() {
            return Ok(None);
        }
        let file = FeatureFile::decode(&std::fs::read(&path)?)?;
        if file.adapter_id != adapter_id || file.adapter_version != adapter_version {
            return Err(Error::FeatureFormat(format!(
                "{} was written by {}@{}",
                path.display(),
                file.adapter_id,
                file.adapter_version
            )));
        }
        Ok(Some(file.matrix.mapv(f64::from)))
    }

    pub fn put(
        &self,
        sample_id: &str,
        adapter_id: &str,
        adapter_version: &str,
        matrix: &Array2<f64>,
    ) -> Result<()> {
        let path = self.path_for(sample_id, adapter_id, adapter_version);
        let dir = path.parent().expect("sharded path has a parent");
        std::fs::create_dir_all(dir)?;
        let file = FeatureFile {
            adapter_id: adapter_id.to_string(),
            adapter_version: adapter_version.to_string(),
            matrix: matrix.mapv(|v| v as f32),
        };
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::File::create(&tmp)?.write_all(&file.encode())?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            rows in 0usize..5,
            cols in 0usize..7,
            seed in any::<u32>(),
            id in "[a-z-]{0,12}",
        ) {
            let matrix = Array2::from_shape_fn((rows, cols), |(r, c)| {
                (seed as f32) * 1e-6 + r as f32 - 0.5 * c as f32
            });
            let f = FeatureFile { adapter_id: id, adapter_version: "3".into(), matrix };
            prop_assert_eq!(FeatureFile::decode(&f.encode()).unwrap(), f);
        }
    }

    #[test]
    fn rejects_truncated_and_foreign_files() {
        let f = FeatureFile {
            adapter_id: "x".into(),
            adapter_version: "1".into(),
            matrix: Array2::zeros((2, 2)),
        };
        let bytes = f.encode();
        assert!(FeatureFile::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(FeatureFile::decode(b"NOPE").is_err());
    }

    #[test]
    fn cache_keys_include_adapter() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path());
        let m = Array2::from_elem((3, 4), 0.5);
        cache.put("s1", "mock", "1", &m).unwrap();
        assert_eq!(cache.get("s1", "mock", "1").unwrap().unwrap(), m);
        assert!(cache.get("s1", "mock", "2").unwrap().is_none());
        assert!(cache.get("s2", "mock", "1").unwrap().is_none());
    }
}
