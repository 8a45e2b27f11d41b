use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{confusion, prf, roc_auc, ConfusionMatrix, Prf, RocReport};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    /// SHA-256 of the serialized model and training configuration.
    pub config_hash: String,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub split: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub class_names: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub metrics: Prf,
    pub roc: RocReport,
    pub metadata: RunMetadata,
}

impl EvaluationReport {
    /// Predictions are the arg-max of each score row.
    pub fn from_scores(
        scores: &[Vec<f64>],
        true_labels: &[usize],
        class_names: Vec<String>,
        metadata: RunMetadata,
    ) -> Result<Self> {
        let k = class_names.len();
        let predicted: Vec<usize> = scores
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                    )
                    .0
            })
            .collect();
        let confusion = confusion(true_labels, &predicted, k)?;
        let metrics = prf(&confusion);
        let roc = roc_auc(scores, true_labels)?;
        if roc.per_class.len() != k && !scores.is_empty() {
            return Err(Error::Contract(format!(
                "{} score columns for {k} class names",
                roc.per_class.len()
            )));
        }
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            class_names,
            accuracy: confusion.accuracy(),
            confusion,
            metrics,
            roc,
            metadata,
        })
    }

    /// Flat view of every scalar metric, keyed by a stable name.
    pub fn scalars(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        m.insert("accuracy".into(), self.accuracy);
        for (prefix, a) in [("macro", &self.metrics.macro_avg), ("micro", &self.metrics.micro_avg)] {
            m.insert(format!("{prefix}_precision"), a.precision);
            m.insert(format!("{prefix}_recall"), a.recall);
            m.insert(format!("{prefix}_f1"), a.f1);
        }
        for (name, c) in self.class_names.iter().zip(&self.metrics.per_class) {
            m.insert(format!("precision_{name}"), c.precision);
            m.insert(format!("recall_{name}"), c.recall);
            m.insert(format!("f1_{name}"), c.f1);
        }
        for (name, c) in self.class_names.iter().zip(&self.roc.per_class) {
            if let Some(c) = c {
                m.insert(format!("auc_{name}"), c.auc);
            }
        }
        if let Some(c) = &self.roc.micro {
            m.insert("micro_auc".into(), c.auc);
        }
        if let Some(a) = self.roc.macro_auc {
            m.insert("macro_auc".into(), a);
        }
        m
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        let found = probe.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != REPORT_SCHEMA_VERSION {
            return Err(Error::Version {
                found,
                expected: REPORT_SCHEMA_VERSION,
            });
        }
        serde_json::from_value(probe).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Writes `report.json` plus `roc_<class>.tsv`, `roc_micro.tsv` and
    /// `roc_macro.tsv` for every defined curve.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: String, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("report.json".into(), self.to_json()?)?;
        for (name, c) in self.class_names.iter().zip(&self.roc.per_class) {
            if let Some(c) = c {
                put(format!("roc_{name}.tsv"), c.to_tsv())?;
            }
        }
        if let Some(c) = &self.roc.micro {
            put("roc_micro.tsv".into(), c.to_tsv())?;
        }
        if let Some(c) = &self.roc.macro_curve {
            put("roc_macro.tsv".into(), c.to_tsv())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EvaluationReport {
        let scores = vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.6, 0.3],
            vec![0.2, 0.3, 0.5],
            vec![0.4, 0.5, 0.1],
        ];
        let names = ["a", "b", "c"].map(String::from).to_vec();
        EvaluationReport::from_scores(&scores, &[0, 1, 2, 0], names, RunMetadata::default()).unwrap()
    }

    #[test]
    fn accuracy_is_trace_over_total() {
        let r = sample();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.accuracy, r.confusion.trace() as f64 / r.confusion.total() as f64);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let r = sample();
        let text = r.to_json().unwrap();
        assert_eq!(EvaluationReport::from_json(&text).unwrap(), r);
        let bumped = text.replacen("\"schema_version\": 1", "\"schema_version\": 9", 1);
        assert!(matches!(
            EvaluationReport::from_json(&bumped),
            Err(Error::Version { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn writes_curve_tables() {
        let dir = tempfile::tempdir().unwrap();
        sample().write(dir.path()).unwrap();
        for f in ["report.json", "roc_a.tsv", "roc_micro.tsv", "roc_macro.tsv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let t = fs::read_to_string(dir.path().join("roc_a.tsv")).unwrap();
        assert!(t.starts_with("fpr\ttpr\n0\t0\n"));
    }
}
