//! Labeled image sets: loading, tiling, splitting, class balancing,
//! augmentation, synthetic generation and normalization.

mod augment;
mod balance;
mod io;
mod normalize;
mod split;
mod synth;
mod tiling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use augment::{affine_transform, augment, rotate90, AffineParams, AugmentSpec, FillMode};
pub use balance::{balance_classes, gaussian_noise, shot_noise};
pub use io::{
    load_image_dir, read_split_manifest, save_image_png, write_image_dir, write_split_manifest, ManifestRecord,
};
pub use normalize::NormStats;
pub use split::{make_splits, SplitSpec};
pub use synth::synth_dataset;
pub use tiling::{tile_grid, tile_image, untile_grid};

/// Tissue class of an image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Nontumor,
    Necrotic,
    Viable,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Nontumor, Label::Necrotic, Label::Viable];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Nontumor => "nontumor",
            Label::Necrotic => "necrotic",
            Label::Viable => "viable",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown label `{s}` (expected nontumor, necrotic or viable)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Data(format!("unknown split `{s}`"))),
        }
    }
}

/// An image `[C, H, W]` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub pixels: Tensor<f32>,
    pub label: Label,
    pub source_id: String,
    /// Unassigned until [`make_splits`] runs.
    pub split: Option<Split>,
    pub augmented: bool,
}

impl LabeledImage {
    pub fn new(pixels: Tensor<f32>, label: Label, source_id: impl Into<String>) -> Self {
        Self {
            pixels,
            label,
            source_id: source_id.into(),
            split: None,
            augmented: false,
        }
    }

    pub fn channels(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<LabeledImage>,
}

impl LabeledDataset {
    pub fn new(images: Vec<LabeledImage>) -> Result<Self> {
        let ds = Self { images };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledImage> {
        self.images.iter().filter(move |im| im.split == Some(split))
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Per-class counts, indexed by [`Label::index`].
    pub fn class_counts<'a>(images: impl IntoIterator<Item = &'a LabeledImage>) -> [usize; 3] {
        let mut c = [0; 3];
        for im in images {
            c[im.label.index()] += 1;
        }
        c
    }

    /// Checks the dataset-wide invariants: finite pixels in `[C, H, W]`
    /// layout and no augmented image in the test split.
    pub fn validate(&self) -> Result<()> {
        for im in &self.images {
            if im.pixels.rank() != 3 {
                return Err(Error::Data(format!("{}: pixels must be [C, H, W]", im.source_id)));
            }
            if !im.pixels.all_finite() {
                return Err(Error::Data(format!("{}: non-finite pixel values", im.source_id)));
            }
            if im.augmented && im.split == Some(Split::Test) {
                return Err(Error::Data(format!(
                    "{}: augmented image in the test split",
                    im.source_id
                )));
            }
        }
        Ok(())
    }
}

/// Stacks same-shaped images into a `[B, C, H, W]` batch, standardized by
/// `norm` when given, together with their class indices.
pub fn stack_batch(images: &[&LabeledImage], norm: Option<&NormStats>) -> Result<(Tensor<f32>, Vec<usize>)> {
    let first = images
        .first()
        .ok_or_else(|| Error::Contract("cannot stack an empty batch".into()))?;
    let shape = first.pixels.shape().to_vec();
    let mut data = Vec::with_capacity(images.len() * first.pixels.numel());
    let mut labels = Vec::with_capacity(images.len());
    for im in images {
        if im.pixels.shape() != shape.as_slice() {
            return Err(Error::Data(format!(
                "{}: shape {:?} differs from {:?} in the same batch",
                im.source_id,
                im.pixels.shape(),
                shape
            )));
        }
        data.extend_from_slice(im.pixels.data());
        labels.push(im.label.index());
    }
    let mut full = vec![images.len()];
    full.extend_from_slice(&shape);
    let batch = Tensor::from_parts(full, data);
    let batch = match norm {
        Some(n) => n.apply(&batch)?,
        None => batch,
    };
    Ok((batch, labels))
}
