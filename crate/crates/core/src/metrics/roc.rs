use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A receiver operating characteristic from `(0, 0)` to `(1, 1)`.
/// `thresholds[i]` is the score cut (predict positive when `score >= t`)
/// that produces point `i + 1`; point 0 predicts nothing positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

impl RocCurve {
    /// Trapezoidal area under `(fpr, tpr)`.
    pub fn trapezoid(fpr: &[f64], tpr: &[f64]) -> f64 {
        fpr.windows(2)
            .zip(tpr.windows(2))
            .map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0)
            .sum()
    }

    /// Two-column `fpr<TAB>tpr` table with a header line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("fpr\ttpr\n");
        for (f, t) in self.fpr.iter().zip(&self.tpr) {
            s.push_str(&format!("{f}\t{t}\n"));
        }
        s
    }
}

/// Sweeps the distinct scores from high to low; equal scores cross the
/// threshold together. The area is accumulated in integer-weighted form so
/// it equals `(#(pos > neg) + ½ #(pos = neg)) / (P · N)` up to rounding.
pub fn binary_roc(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != positive.len() {
        return Err(Error::Contract(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Contract("ROC scores must not be NaN".into()));
    }
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::Evaluation(format!(
            "ROC needs both classes, got {p} positive and {n} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_area = 0u128;
    let mut curve = RocCurve {
        thresholds: Vec::new(),
        fpr: vec![0.0],
        tpr: vec![0.0],
        auc: 0.0,
    };
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == t {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp0) as u128 * (tp0 + tp) as u128;
        curve.thresholds.push(t);
        curve.fpr.push(fp as f64 / n as f64);
        curve.tpr.push(tp as f64 / p as f64);
    }
    curve.auc = twice_area as f64 / (2.0 * p as f64 * n as f64);
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    /// One-vs-rest curve per class; `None` when the class has no positives
    /// or no negatives.
    pub per_class: Vec<Option<RocCurve>>,
    pub undefined_classes: Vec<usize>,
    /// All `(score, indicator)` pairs pooled into one binary problem.
    pub micro: Option<RocCurve>,
    /// Mean of the per-class TPRs interpolated on the union of their FPRs.
    pub macro_curve: Option<RocCurve>,
    /// Mean per-class AUC over the defined classes.
    pub macro_auc: Option<f64>,
}

fn interp(x: f64, xs: &[f64], ys: &[f64]) -> f64 {
    // xs nondecreasing; take the upper envelope at vertical steps
    let j = xs.partition_point(|&v| v <= x);
    if j == 0 {
        return ys[0];
    }
    if j == xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1, y0, y1) = (xs[j - 1], xs[j], ys[j - 1], ys[j]);
    if x1 == x0 {
        y1
    } else {
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

/// One-vs-rest ROC analysis of `[n][k]` class probabilities.
pub fn roc_auc(scores: &[Vec<f64>], true_labels: &[usize]) -> Result<RocReport> {
    if scores.len() != true_labels.len() {
        return Err(Error::Contract(format!(
            "{} score rows for {} labels",
            scores.len(),
            true_labels.len()
        )));
    }
    let k = scores.first().map_or(0, Vec::len);
    for (i, row) in scores.iter().enumerate() {
        if row.len() != k {
            return Err(Error::Contract(format!(
                "score row {i} has {} entries, expected {k}",
                row.len()
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-3 {
            return Err(Error::Contract(format!("score row {i} sums to {s}, not 1")));
        }
    }
    if let Some(&t) = true_labels.iter().find(|&&t| t >= k) {
        return Err(Error::Contract(format!("label {t} out of range for {k} classes")));
    }
    let mut per_class = Vec::with_capacity(k);
    let mut undefined_classes = Vec::new();
    for c in 0..k {
        let col: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let ind: Vec<bool> = true_labels.iter().map(|&t| t == c).collect();
        match binary_roc(&col, &ind) {
            Ok(curve) => per_class.push(Some(curve)),
            Err(Error::Evaluation(_)) => {
                per_class.push(None);
                undefined_classes.push(c);
            }
            Err(e) => return Err(e),
        }
    }
    let pooled: Vec<f64> = scores.iter().flatten().copied().collect();
    let pooled_ind: Vec<bool> = true_labels.iter().flat_map(|&t| (0..k).map(move |c| c == t)).collect();
    let micro = binary_roc(&pooled, &pooled_ind).ok();

    let defined: Vec<&RocCurve> = per_class.iter().flatten().collect();
    let (macro_curve, macro_auc) = if defined.is_empty() {
        (None, None)
    } else {
        let mut grid: Vec<f64> = defined.iter().flat_map(|c| c.fpr.iter().copied()).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let tpr: Vec<f64> = grid
            .iter()
            .map(|&x| defined.iter().map(|c| interp(x, &c.fpr, &c.tpr)).sum::<f64>() / defined.len() as f64)
            .collect();
        let mut fpr = vec![0.0];
        fpr.extend(&grid);
        let mut tp = vec![0.0];
        tp.extend(&tpr);
        let auc = RocCurve::trapezoid(&fpr, &tp);
        let mean_auc = defined.iter().map(|c| c.auc).sum::<f64>() / defined.len() as f64;
        (
            Some(RocCurve {
                thresholds: Vec::new(),
                fpr,
                tpr: tp,
                auc,
            }),
            Some(mean_auc),
        )
    };
    Ok(RocReport {
        per_class,
        undefined_classes,
        micro,
        macro_curve,
        macro_auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_and_uniform() {
        let c = binary_roc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!((c.fpr[0], c.tpr[0]), (0.0, 0.0));
        assert_eq!((*c.fpr.last().unwrap(), *c.tpr.last().unwrap()), (1.0, 1.0));
        let u = binary_roc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(u.auc, 0.5);
        assert_eq!(u.fpr, vec![0.0, 1.0]);
    }

    #[test]
    fn trapezoid_agrees_with_integer_area() {
        let s = [0.9, 0.7, 0.7, 0.4, 0.3, 0.3, 0.1];
        let y = [true, false, true, true, false, true, false];
        let c = binary_roc(&s, &y).unwrap();
        assert!((RocCurve::trapezoid(&c.fpr, &c.tpr) - c.auc).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            binary_roc(&[0.1, 0.2], &[true, true]),
            Err(Error::Evaluation(_))
        ));
        let r = roc_auc(&[vec![0.6, 0.4, 0.0], vec![0.2, 0.8, 0.0]], &[0, 1]).unwrap();
        assert_eq!(r.undefined_classes, vec![2]);
        assert_eq!(r.macro_auc, Some(1.0));
    }

    #[test]
    fn unnormalized_rows_rejected() {
        assert!(matches!(roc_auc(&[vec![0.6, 0.6]], &[0]), Err(Error::Contract(_))));
    }
}
