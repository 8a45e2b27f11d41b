use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[t][p]` = number of samples of true class `t` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total`, or 0 when empty.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    /// Column sum: how often `c` was predicted.
    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    /// Row sum: how often `c` was the true class.
    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    /// Element-wise sum; both matrices must share `k`.
    pub fn merged(&self, other: &Self) -> Result<Self> {
        if self.k() != other.k() {
            return Err(Error::Contract(format!(
                "cannot add {}-class and {}-class confusion",
                self.k(),
                other.k()
            )));
        }
        let mut out = self.clone();
        for (r, o) in out.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
        Ok(out)
    }
}

pub fn confusion(true_labels: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted.len() {
        return Err(Error::Contract(format!(
            "{} true labels but {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    let mut m = ConfusionMatrix::zeros(k);
    for (&t, &p) in true_labels.iter().zip(predicted) {
        if t >= k || p >= k {
            return Err(Error::Contract(format!(
                "label pair ({t}, {p}) out of range for {k} classes"
            )));
        }
        m.counts[t][p] += 1;
    }
    Ok(m)
}
