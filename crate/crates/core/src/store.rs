//! Directory-based artifact format: a `manifest.json` plus raw blobs, each
//! blob listed once with its dtype, shape and SHA-256 digest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{ParamSet, Tensor};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    F32,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub sha256: String,
}

impl BlobEntry {
    pub fn byte_len(&self) -> usize {
        self.shape.iter().product::<usize>() * self.dtype.size()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest<M> {
    pub version: u32,
    pub kind: String,
    pub meta: M,
    pub blobs: Vec<BlobEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn f32_to_le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn le_to_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Accumulates blobs in a directory; `finish` writes the manifest last so a
/// partially written artifact has no manifest.
pub struct ArtifactWriter {
    dir: PathBuf,
    blobs: Vec<BlobEntry>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let manifest = dir.join(MANIFEST);
        if manifest.exists() {
            fs::remove_file(manifest)?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            blobs: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, dtype: Dtype, shape: &[usize], bytes: &[u8]) -> Result<()> {
        if self.blobs.iter().any(|b| b.name == name) {
            return Err(Error::Invalid(format!("blob `{name}` written twice")));
        }
        let entry = BlobEntry {
            name: name.to_string(),
            dtype,
            shape: shape.to_vec(),
            sha256: sha256_hex(bytes),
        };
        if entry.byte_len() != bytes.len() {
            return Err(Error::Shape(format!(
                "blob `{name}`: shape {shape:?} needs {} bytes, got {}",
                entry.byte_len(),
                bytes.len()
            )));
        }
        fs::write(self.dir.join(name), bytes)?;
        self.blobs.push(entry);
        Ok(())
    }

    pub fn put_u8(&mut self, name: &str, shape: &[usize], data: &[u8]) -> Result<()> {
        self.put(name, Dtype::U8, shape, data)
    }

    pub fn put_f32(&mut self, name: &str, shape: &[usize], data: &[f32]) -> Result<()> {
        self.put(name, Dtype::F32, shape, &f32_to_le(data))
    }

    pub fn put_params(&mut self, prefix: &str, params: &ParamSet<f32>) -> Result<()> {
        for (_, name, t) in params.iter() {
            self.put_f32(&format!("{prefix}{name}.f32"), t.shape(), t.data())?;
        }
        Ok(())
    }

    pub fn finish<M: Serialize>(self, kind: &str, meta: M) -> Result<()> {
        let manifest = Manifest {
            version: FORMAT_VERSION,
            kind: kind.to_string(),
            meta,
            blobs: self.blobs,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(())
    }
}

/// Opened artifact directory with a validated manifest.
pub struct ArtifactReader<M> {
    dir: PathBuf,
    pub manifest: Manifest<M>,
}

impl<M: DeserializeOwned> ArtifactReader<M> {
    pub fn open(dir: &Path, kind: &str) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path)?;
        let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        let found = raw.get("version").and_then(|v| v.as_u64()).ok_or_else(|| Error::Manifest {
            path: path.clone(),
            detail: "missing `version`".into(),
        })?;
        if found != u64::from(FORMAT_VERSION) {
            return Err(Error::Version {
                path,
                expected: FORMAT_VERSION,
                found: found.try_into().unwrap_or(u32::MAX),
            });
        }
        let manifest: Manifest<M> = serde_json::from_value(raw).map_err(|e| Error::Manifest {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        if manifest.kind != kind {
            return Err(Error::Manifest {
                path,
                detail: format!("expected a `{kind}` artifact, found `{}`", manifest.kind),
            });
        }
        let mut names: Vec<&str> = manifest.blobs.iter().map(|b| b.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Manifest {
                path,
                detail: "a blob is listed more than once".into(),
            });
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn entry(&self, name: &str) -> Result<&BlobEntry> {
        self.manifest
            .blobs
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Manifest {
                path: self.dir.join(MANIFEST),
                detail: format!("no blob named `{name}`"),
            })
    }

    fn bytes(&self, name: &str, dtype: Dtype) -> Result<(Vec<u8>, Vec<usize>)> {
        let entry = self.entry(name)?;
        if entry.dtype != dtype {
            return Err(Error::Manifest {
                path: self.dir.join(MANIFEST),
                detail: format!("blob `{name}` has dtype {:?}", entry.dtype),
            });
        }
        let bytes = fs::read(self.dir.join(name))?;
        if bytes.len() != entry.byte_len() {
            return Err(Error::Truncated {
                name: name.to_string(),
                expected: entry.byte_len(),
                found: bytes.len(),
            });
        }
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Checksum { name: name.to_string() });
        }
        Ok((bytes, entry.shape.clone()))
    }

    pub fn u8(&self, name: &str) -> Result<(Vec<u8>, Vec<usize>)> {
        self.bytes(name, Dtype::U8)
    }

    pub fn f32(&self, name: &str) -> Result<(Vec<f32>, Vec<usize>)> {
        let (bytes, shape) = self.bytes(name, Dtype::F32)?;
        Ok((le_to_f32(&bytes), shape))
    }

    /// Loads blobs written by [`ArtifactWriter::put_params`] into `params`,
    /// checking every name and shape.
    pub fn load_params(&self, prefix: &str, params: &mut ParamSet<f32>) -> Result<()> {
        let names: Vec<String> = params.names().to_vec();
        for (i, name) in names.iter().enumerate() {
            let (data, shape) = self.f32(&format!("{prefix}{name}.f32"))?;
            let target = params.get_mut(crate::nn::ParamId(i));
            if shape != target.shape() {
                return Err(Error::Shape(format!(
                    "parameter `{name}`: stored {shape:?}, model {:?}",
                    target.shape()
                )));
            }
            *target = Tensor::from_vec(&shape, data)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(dir: &Path) {
        let mut w = ArtifactWriter::create(dir).unwrap();
        w.put_u8("img.u8", &[2, 3], &[1, 2, 3, 4, 5, 6]).unwrap();
        w.put_f32("x.f32", &[3], &[0.5, -1.0, 1e-7]).unwrap();
        w.finish("demo", serde_json::json!({"seed": 4})).unwrap();
    }

    #[test]
    fn round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        sample(tmp.path());
        let r = ArtifactReader::<serde_json::Value>::open(tmp.path(), "demo").unwrap();
        assert_eq!(r.u8("img.u8").unwrap(), (vec![1, 2, 3, 4, 5, 6], vec![2, 3]));
        assert_eq!(r.f32("x.f32").unwrap().0, vec![0.5, -1.0, 1e-7]);
        assert_eq!(r.manifest.meta["seed"], 4);
    }

    #[test]
    fn corrupted_byte_is_a_checksum_error() {
        let tmp = tempfile::tempdir().unwrap();
        sample(tmp.path());
        let p = tmp.path().join("img.u8");
        let mut b = fs::read(&p).unwrap();
        b[2] ^= 1;
        fs::write(&p, b).unwrap();
        let r = ArtifactReader::<serde_json::Value>::open(tmp.path(), "demo").unwrap();
        assert!(matches!(r.u8("img.u8"), Err(Error::Checksum { .. })));
    }

    #[test]
    fn short_blob_is_truncation() {
        let tmp = tempfile::tempdir().unwrap();
        sample(tmp.path());
        let p = tmp.path().join("x.f32");
        let b = fs::read(&p).unwrap();
        fs::write(&p, &b[..7]).unwrap();
        let r = ArtifactReader::<serde_json::Value>::open(tmp.path(), "demo").unwrap();
        assert!(matches!(
            r.f32("x.f32"),
            Err(Error::Truncated { expected: 12, found: 7, .. })
        ));
    }

    #[test]
    fn wrong_version_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        sample(tmp.path());
        let p = tmp.path().join(MANIFEST);
        let text = fs::read_to_string(&p).unwrap().replace("\"version\": 1", "\"version\": 7");
        fs::write(&p, text).unwrap();
        let r = ArtifactReader::<serde_json::Value>::open(tmp.path(), "demo");
        assert!(matches!(r, Err(Error::Version { found: 7, expected: 1, .. })));
    }

    #[test]
    fn wrong_kind_and_duplicates_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        sample(tmp.path());
        assert!(ArtifactReader::<serde_json::Value>::open(tmp.path(), "other").is_err());
        let mut w = ArtifactWriter::create(tmp.path()).unwrap();
        w.put_u8("a", &[1], &[0]).unwrap();
        assert!(w.put_u8("a", &[1], &[0]).is_err());
        assert!(w.put_u8("b", &[2], &[0]).is_err());
    }
}
