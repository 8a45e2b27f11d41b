use serde::{Deserialize, Serialize};

use crate::metrics::ConfusionMatrix;

/// Scores for one class. A zero denominator yields 0 and sets the matching
/// `*_undefined` flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averaged {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean over classes.
    pub macro_avg: Averaged,
    /// From pooled TP/FP/FN; equals accuracy for single-label data.
    pub micro_avg: Averaged,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn harmonic(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

pub fn prf(m: &ConfusionMatrix) -> Prf {
    let k = m.k();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = m.get(c, c);
            let (precision, precision_undefined) = ratio(tp, m.predicted(c));
            let (recall, recall_undefined) = ratio(tp, m.support(c));
            let (f1, f1_undefined) = harmonic(precision, recall);
            ClassMetrics {
                precision,
                recall,
                f1,
                support: m.support(c),
                precision_undefined,
                recall_undefined,
                f1_undefined,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if k == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / k as f64
        }
    };
    let macro_avg = Averaged {
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
    };
    // every error is one FP for its predicted class and one FN for its true class
    let tp = m.trace();
    let errors = m.total() - tp;
    let (mp, _) = ratio(tp, tp + errors);
    let (mr, _) = ratio(tp, tp + errors);
    let (mf, _) = harmonic(mp, mr);
    Prf {
        per_class,
        macro_avg,
        micro_avg: Averaged {
            precision: mp,
            recall: mr,
            f1: mf,
        },
        accuracy: m.accuracy(),
    }
}
