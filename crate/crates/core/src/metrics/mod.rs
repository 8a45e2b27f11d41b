//! Classification metrics: confusion matrix, precision/recall/F1, one-vs-rest
//! ROC curves with AUC, evaluation reports and cross-validation aggregation.

mod confusion;
mod cv;
mod prf;
mod report;
mod roc;

pub use confusion::{confusion, ConfusionMatrix};
pub use cv::{aggregate_cv, CvReport};
pub use prf::{prf, Averaged, ClassMetrics, Prf};
pub use report::{EvaluationReport, RunMetadata, REPORT_SCHEMA_VERSION};
pub use roc::{binary_roc, roc_auc, RocCurve, RocReport};
