use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::model::{FcflModel, ModelConfig};
use crate::nn::ParamStore;
use crate::tensor::Tensor;
use crate::train::{AdamState, TrainConfig};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const BLOB: &str = "params.bin";

/// Everything needed to resume training or evaluate: configs, parameters,
/// optimizer moments, epoch counter, normalization statistics and the
/// training rng.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub params: ParamStore<f32>,
    pub optimizer: AdamState<f32>,
    /// Completed epochs.
    pub epoch: usize,
    pub norm: NormStats,
    pub rng: ChaCha8Rng,
    pub val_accuracy: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Element offset within each of the three blob sections.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema_version: u32,
    model_config: ModelConfig,
    train_config: TrainConfig,
    epoch: usize,
    optimizer_step: u64,
    norm: NormStats,
    rng: ChaCha8Rng,
    val_accuracy: Option<f64>,
    /// The blob holds parameters, then first moments, then second moments,
    /// `section_len` little-endian f32 values each.
    tensors: Vec<TensorEntry>,
    section_len: usize,
    sha256: String,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn serde_err(e: impl std::fmt::Display) -> Error {
    Error::Serde(e.to_string())
}

impl Checkpoint {
    pub fn model(&self) -> Result<FcflModel<f32>> {
        FcflModel::from_params(self.model_config.clone(), self.params.clone())
    }

    /// Writes `dir/manifest.json` and `dir/params.bin`. The directory is
    /// assembled under a temporary name and renamed into place.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let mut tensors = Vec::with_capacity(self.params.len());
        let mut offset = 0;
        for (_, name, t) in self.params.iter() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += t.numel();
        }
        let mut blob = Vec::with_capacity(3 * offset * 4);
        for section in [self.params.tensors(), &self.optimizer.m[..], &self.optimizer.v[..]] {
            for t in section {
                for v in t.data() {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        if blob.len() != 3 * offset * 4 {
            return Err(Error::Contract("optimizer state does not match the parameters".into()));
        }
        let manifest = Manifest {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            model_config: self.model_config.clone(),
            train_config: self.train_config.clone(),
            epoch: self.epoch,
            optimizer_step: self.optimizer.step,
            norm: self.norm.clone(),
            rng: self.rng.clone(),
            val_accuracy: self.val_accuracy,
            tensors,
            section_len: offset,
            sha256: hex_digest(&blob),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(serde_err)?;

        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let parent = dir
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let tmp: PathBuf = parent.join(format!(".{name}.tmp-{}", std::process::id()));
        let _ = fs::remove_dir_all(&tmp);
        fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;
        fs::write(tmp.join(BLOB), &blob).map_err(|e| Error::io(tmp.join(BLOB), e))?;
        fs::write(tmp.join(MANIFEST), text).map_err(|e| Error::io(tmp.join(MANIFEST), e))?;
        if dir.exists() {
            let old = parent.join(format!(".{name}.old-{}", std::process::id()));
            fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
            fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
            fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
        } else {
            fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mpath = dir.join(MANIFEST);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let probe: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Integrity(format!("{}: {e}", mpath.display())))?;
        let found = probe
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Integrity("manifest has no schema_version".into()))? as u32;
        if found != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Version {
                found,
                expected: CHECKPOINT_SCHEMA_VERSION,
            });
        }
        let m: Manifest = serde_json::from_value(probe).map_err(serde_err)?;

        let bpath = dir.join(BLOB);
        let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
        if blob.len() != 3 * m.section_len * 4 {
            return Err(Error::Integrity(format!(
                "{} has {} bytes, manifest expects {}",
                bpath.display(),
                blob.len(),
                3 * m.section_len * 4
            )));
        }
        if hex_digest(&blob) != m.sha256 {
            return Err(Error::Integrity(format!("{} checksum mismatch", bpath.display())));
        }
        let floats: Vec<f32> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut sections: [Vec<Tensor<f32>>; 3] = Default::default();
        let mut params = ParamStore::new();
        for entry in &m.tensors {
            let n: usize = entry.shape.iter().product();
            if entry.offset + n > m.section_len {
                return Err(Error::Integrity(format!("tensor {} overruns the blob", entry.name)));
            }
            for (s, section) in sections.iter_mut().enumerate() {
                let start = s * m.section_len + entry.offset;
                section.push(Tensor::new(entry.shape.clone(), floats[start..start + n].to_vec())?);
            }
        }
        let [p, mo, vo] = sections;
        for (entry, t) in m.tensors.iter().zip(p) {
            params.add(entry.name.clone(), t);
        }
        Ok(Self {
            model_config: m.model_config,
            train_config: m.train_config,
            params,
            optimizer: AdamState {
                step: m.optimizer_step,
                m: mo,
                v: vo,
            },
            epoch: m.epoch,
            norm: m.norm,
            rng: m.rng,
            val_accuracy: m.val_accuracy,
        })
    }
}
