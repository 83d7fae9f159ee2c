//! Parameter checkpoints: `b"LMOECKPT"`, a `u64` manifest length, the JSON
//! manifest, then every tensor as little-endian `f32` in manifest order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use limoe_core::{ParameterStore, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LMOECKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dtype: String,
    pub stage: String,
    pub config_digest: String,
    pub seed: u64,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<TensorEntry>,
}

/// Hex SHA-256 of the bytes a config serialises to.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: String,
    pub config_digest: String,
    pub seed: u64,
    pub metadata: BTreeMap<String, String>,
    pub params: ParameterStore<f32>,
}

impl Checkpoint {
    pub fn new(
        stage: impl Into<String>,
        config_digest: impl Into<String>,
        seed: u64,
        params: ParameterStore<f32>,
    ) -> Self {
        Self {
            stage: stage.into(),
            config_digest: config_digest.into(),
            seed,
            metadata: BTreeMap::new(),
            params,
        }
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            dtype: "f32".into(),
            stage: self.stage.clone(),
            config_digest: self.config_digest.clone(),
            seed: self.seed,
            metadata: self.metadata.clone(),
            tensors: self
                .params
                .iter()
                .map(|p| TensorEntry {
                    name: p.name.clone(),
                    shape: p.tensor.shape().to_vec(),
                    trainable: p.trainable,
                })
                .collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest()).expect("manifest serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for p in self.params.iter() {
            for v in p.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::format("not a checkpoint file"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json = bytes
            .get(16..16usize.saturating_add(len))
            .ok_or_else(|| Error::format("checkpoint manifest is truncated"))?;
        let manifest: Manifest =
            serde_json::from_slice(json).map_err(|e| Error::format(format!("bad checkpoint manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION || manifest.dtype != "f32" {
            return Err(Error::format(format!(
                "unsupported checkpoint (version {}, dtype {})",
                manifest.format_version, manifest.dtype
            )));
        }
        let mut blob = &bytes[16 + len..];
        let mut params = ParameterStore::new();
        for t in &manifest.tensors {
            let n: usize = t.shape.iter().product();
            if blob.len() < 4 * n {
                return Err(Error::format(format!("checkpoint blob ends inside `{}`", t.name)));
            }
            let data = blob[..4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            blob = &blob[4 * n..];
            params.insert(t.name.clone(), Tensor::new(t.shape.clone(), data)?)?;
        }
        for (p, t) in params.iter_mut().zip(&manifest.tensors) {
            p.trainable = t.trainable;
        }
        if !blob.is_empty() {
            return Err(Error::format("trailing bytes after checkpoint blob"));
        }
        Ok(Self {
            stage: manifest.stage,
            config_digest: manifest.config_digest,
            seed: manifest.seed,
            metadata: manifest.metadata,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| Error::format(format!("{}: {e}", path.display())))
    }

    /// Loads and checks that names and shapes match `expected`.
    pub fn load_expecting(path: &Path, expected: &ParameterStore<f32>) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.check_against(expected)?;
        Ok(ck)
    }

    pub fn check_against(&self, expected: &ParameterStore<f32>) -> Result<()> {
        let have: Vec<_> = self
            .params
            .iter()
            .map(|p| (p.name.as_str(), p.tensor.shape()))
            .collect();
        let want: Vec<_> = expected.iter().map(|p| (p.name.as_str(), p.tensor.shape())).collect();
        if have != want {
            let first = have
                .iter()
                .zip(&want)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("{a:?} vs expected {b:?}"))
                .unwrap_or_else(|| format!("{} tensors vs expected {}", have.len(), want.len()));
            return Err(Error::format(format!(
                "checkpoint does not match the expected manifest: {first}"
            )));
        }
        Ok(())
    }
}
