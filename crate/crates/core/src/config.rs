//! Run configuration files and dataset assembly for the command line.
//!
//! A file is TOML with optional `[model]`, `[train]` and `[data]` tables
//! mirroring [`ModelConfig`], [`TrainConfig`] and [`DataConfig`]. It is laid
//! over a base preset key by key, so a file only names what it changes.
//! Unknown keys are an error at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{load_image_dir, make_splits, read_split_manifest, synth_dataset, LabeledDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

/// Manifest file name looked up in a data root.
pub const SPLIT_MANIFEST: &str = "splits.tsv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub split: SplitSpec,
    /// Images per class when no data root is given.
    pub synth_per_class: usize,
    /// Side of the synthetic images; the model's `image_size` when absent.
    #[serde(default)]
    pub synth_size: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            synth_per_class: 300,
            synth_size: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

fn overlay(base: &mut toml::Value, file: toml::Value) {
    match (base, file) {
        (toml::Value::Table(b), toml::Value::Table(f)) => {
            for (k, v) in f {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Toy model and schedule on 20 synthetic 48×48 images per class.
    pub fn toy() -> Self {
        Self {
            model: ModelConfig::toy(),
            train: TrainConfig::toy(),
            data: DataConfig {
                split: SplitSpec {
                    test_count: 12,
                    ..SplitSpec::default()
                },
                synth_per_class: 20,
                synth_size: None,
            },
        }
    }

    /// `text` laid over `base`.
    pub fn from_toml(text: &str, base: &RunConfig) -> Result<Self> {
        let file: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Value::try_from(base).map_err(|e| Error::Serde(e.to_string()))?;
        overlay(&mut merged, file);
        let cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, base: &RunConfig) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.split.validate()
    }

    /// Uses `seed` for initialization, training and the split.
    pub fn reseed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.train.seed = seed;
        self.data.split.seed = seed;
    }

    /// Images under `root` (or the synthetic set without one) with splits
    /// assigned. A `splits.tsv` manifest in `root` takes precedence over
    /// the seeded split.
    pub fn dataset(&self, root: Option<&Path>) -> Result<LabeledDataset> {
        let images = match root {
            Some(r) => {
                let images = load_image_dir(r)?;
                if images.is_empty() {
                    return Err(Error::Data(format!("no images under {}", r.display())));
                }
                let manifest = r.join(SPLIT_MANIFEST);
                if manifest.is_file() {
                    return LabeledDataset::with_manifest(images, &read_split_manifest(&manifest)?);
                }
                images
            }
            None => {
                let size = self.data.synth_size.unwrap_or(self.model.image_size);
                synth_dataset(self.data.synth_per_class, size, self.data.split.seed).images
            }
        };
        make_splits(images, &self.data.split)
    }
}
