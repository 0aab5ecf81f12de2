//! Confusion-matrix metrics, ROC-AUC and result rows.

mod confusion;
mod evaluate;
mod scores;

pub use confusion::{confusion_matrix, ConfusionMatrix, PerClassCounts};
pub use evaluate::{accuracy_gap, evaluate, evaluate_predictions, Evaluation, MetricsReport, Predictor};
pub use scores::{
    accuracy, auc, auc_macro, binary_auc, precision, precision_macro, recall, recall_macro, Averaging,
    MetricWarning, Scored,
};
