use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, EvaluationReport, REPORT_SCHEMA_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub schema_version: u32,
    pub runs: usize,
    pub class_names: Vec<String>,
    /// Sum of the per-run matrices.
    pub confusion: ConfusionMatrix,
    pub mean: BTreeMap<String, f64>,
    /// Population standard deviation (divides by the number of runs).
    pub std: BTreeMap<String, f64>,
}

/// Mean and spread of every scalar metric across runs. A metric missing
/// from some runs (an undefined AUC) is averaged over the runs that have it.
/// Values are summed in sorted order, so the result does not depend on the
/// order of `reports`.
pub fn aggregate_cv(reports: &[EvaluationReport]) -> Result<CvReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Contract("aggregate_cv needs at least one report".into()))?;
    let mut confusion = ConfusionMatrix::zeros(first.confusion.k());
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        if r.confusion.k() != first.confusion.k() {
            return Err(Error::Contract(format!(
                "reports disagree on the class count: {} vs {}",
                r.confusion.k(),
                first.confusion.k()
            )));
        }
        confusion = confusion.merged(&r.confusion)?;
        for (k, v) in r.scalars() {
            values.entry(k).or_default().push(v);
        }
    }
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for (k, mut v) in values {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let mut dev: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
        dev.sort_by(f64::total_cmp);
        std.insert(k.clone(), (dev.iter().sum::<f64>() / n).sqrt());
        mean.insert(k, m);
    }
    Ok(CvReport {
        schema_version: REPORT_SCHEMA_VERSION,
        runs: reports.len(),
        class_names: first.class_names.clone(),
        confusion,
        mean,
        std,
    })
}
