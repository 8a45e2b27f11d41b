use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::head::HeadKind;
use crate::metrics::REPORT_SCHEMA_VERSION;
use crate::model::ModelConfig;
use crate::train::{config_hash, evaluate, train, TrainConfig};

/// Epoch budget for every ablation variant unless overridden.
pub const ABLATION_EPOCHS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    PatchSize,
    Nrca,
    Head,
}

impl AblationKind {
    pub fn name(self) -> &'static str {
        match self {
            AblationKind::PatchSize => "patch_size",
            AblationKind::Nrca => "nrca",
            AblationKind::Head => "head",
        }
    }

    /// `(row label, config)` for each variant, in table order.
    pub fn variants(self, base: &ModelConfig) -> Vec<(String, ModelConfig)> {
        match self {
            AblationKind::PatchSize => [(12, 12), (12, 16), (16, 16)]
                .into_iter()
                .map(|(s, l)| (format!("({s},{l})"), base.with_patch_pair(s, l)))
                .collect(),
            AblationKind::Nrca => vec![
                ("Yes".into(), base.with_nrca(true)),
                ("No".into(), base.with_nrca(false)),
            ],
            AblationKind::Head => vec![
                ("Yes".into(), base.with_head(HeadKind::Residual)),
                ("No".into(), base.with_head(HeadKind::Mlp)),
            ],
        }
    }
}

impl fmt::Display for AblationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patch_size" | "patch-size" => Ok(AblationKind::PatchSize),
            "nrca" => Ok(AblationKind::Nrca),
            "head" => Ok(AblationKind::Head),
            _ => Err(Error::Config(format!(
                "unknown ablation `{s}` (patch_size, nrca or head)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub seed: u64,
    pub epochs: usize,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub schema_version: u32,
    pub kind: AblationKind,
    /// Split the accuracies were measured on.
    pub split: Split,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_tsv(&self) -> String {
        let mut s = format!("{}\taccuracy\tmacro_f1\tseed\tepochs\n", self.kind);
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.variant, r.accuracy, r.macro_f1, r.seed, r.epochs
            ));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }
}

/// Trains and evaluates every variant of `which` with the same seed, data
/// and epoch budget. Accuracy is measured on the test split, or on val or
/// train when the earlier splits are empty.
pub fn ablate(
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    which: AblationKind,
    data: &LabeledDataset,
) -> Result<AblationTable> {
    let split = [Split::Test, Split::Val, Split::Train]
        .into_iter()
        .find(|&s| data.count(s) > 0)
        .ok_or_else(|| Error::Data("ablation needs a non-empty dataset split".into()))?;
    let mut rows = Vec::new();
    for (variant, cfg) in which.variants(base) {
        let outcome = train(&cfg, train_cfg, data, None)?;
        let report = evaluate(&outcome.last, data, split)?;
        rows.push(AblationRow {
            variant,
            accuracy: report.accuracy,
            macro_f1: report.metrics.macro_avg.f1,
            seed: cfg.seed,
            epochs: train_cfg.epochs,
            config_hash: config_hash(&cfg, train_cfg),
        });
    }
    Ok(AblationTable {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: which,
        split,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_labels() {
        let base = ModelConfig::default();
        let labels = |k: AblationKind| k.variants(&base).into_iter().map(|v| v.0).collect::<Vec<_>>();
        assert_eq!(labels(AblationKind::PatchSize), ["(12,12)", "(12,16)", "(16,16)"]);
        assert_eq!(labels(AblationKind::Nrca), ["Yes", "No"]);
        assert_eq!(labels(AblationKind::Head), ["Yes", "No"]);
        for (_, cfg) in AblationKind::PatchSize.variants(&base) {
            assert!(cfg.validate().is_ok());
        }
    }
}
