use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, LabeledImage, Split};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub test_count: usize,
    /// Fraction of the non-test items that go to train.
    pub train_val_ratio: f64,
    pub seed: u64,
    /// Assign whole `source_id` groups to one split, so tiles of one slide
    /// never straddle train and test. Counts then refer to groups.
    #[serde(default)]
    pub group_by_source: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_count: 750,
            train_val_ratio: 0.8,
            seed: 0,
            group_by_source: false,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_val_ratio > 0.0 && self.train_val_ratio < 1.0) {
            return Err(Error::Config(format!(
                "train_val_ratio must lie in (0, 1), got {}",
                self.train_val_ratio
            )));
        }
        Ok(())
    }

    /// `(test, train, val)` sizes for `total` units.
    /// train = floor(ratio · (total − test)); val takes the remainder.
    pub fn counts(&self, total: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        if self.test_count >= total {
            return Err(Error::Config(format!(
                "test_count {} must be smaller than the {total} available items",
                self.test_count
            )));
        }
        let rest = total - self.test_count;
        let train = (self.train_val_ratio * rest as f64).floor() as usize;
        Ok((self.test_count, train, rest - train))
    }
}

/// Seeded shuffle, then the first `test_count` units go to test and the rest
/// is cut into train and val. Any previous assignment is overwritten.
pub fn make_splits(images: Vec<LabeledImage>, spec: &SplitSpec) -> Result<LabeledDataset> {
    let mut images = images;
    // units are indices (item mode) or groups of indices (source mode)
    let units: Vec<Vec<usize>> = if spec.group_by_source {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, im) in images.iter().enumerate() {
            groups.entry(im.source_id.as_str()).or_default().push(i);
        }
        groups.into_values().collect()
    } else {
        (0..images.len()).map(|i| vec![i]).collect()
    };
    let (test, train, _) = spec.counts(units.len())?;
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    for (pos, &u) in order.iter().enumerate() {
        let split = if pos < test {
            Split::Test
        } else if pos < test + train {
            Split::Train
        } else {
            Split::Val
        };
        for &i in &units[u] {
            images[i].split = Some(split);
        }
    }
    LabeledDataset::new(images)
}
