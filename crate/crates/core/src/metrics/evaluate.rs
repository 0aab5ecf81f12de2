use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::confusion::{confusion_matrix, ConfusionMatrix};
use super::scores::{accuracy, auc, precision, recall, Averaging, MetricWarning};
use crate::dataset::{load_batch, DatasetIndex, ImageBatch, LoadOptions};
use crate::error::{Error, Result};
use crate::model::{ClassifierModel, ProbabilityMatrix};
use crate::training::{argmax, categorical_cross_entropy};

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub set_name: String,
    pub loss: f64,
    /// Fraction in `[0, 1]`; rendered as a percentage.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
    pub averaging: Averaging,
}

impl MetricsReport {
    pub fn is_finite(&self) -> bool {
        [self.loss, self.accuracy, self.precision, self.recall, self.auc]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub warnings: Vec<MetricWarning>,
}

/// Anything that maps an image batch to class probabilities.
pub trait Predictor {
    fn num_classes(&self) -> usize;
    fn input_size(&self) -> usize;
    fn predict_batch(&self, batch: &ImageBatch) -> Result<ProbabilityMatrix>;
}

impl Predictor for ClassifierModel {
    fn num_classes(&self) -> usize {
        self.config().num_classes
    }

    fn input_size(&self) -> usize {
        self.config().input_size
    }

    fn predict_batch(&self, batch: &ImageBatch) -> Result<ProbabilityMatrix> {
        ClassifierModel::predict_batch(self, batch)
    }
}

fn with_set(set_name: &str, e: Error) -> Error {
    match e {
        Error::UndefinedMetric(m) => Error::UndefinedMetric(format!("{set_name}: {m}")),
        other => other,
    }
}

/// Scores precomputed probabilities against true labels.
pub fn evaluate_predictions(
    probabilities: &ProbabilityMatrix,
    actual: &[usize],
    set_name: &str,
    averaging: Averaging,
) -> Result<Evaluation> {
    if actual.is_empty() {
        return Err(Error::UndefinedMetric(format!("{set_name}: no samples")));
    }
    let k = probabilities.ncols();
    let predicted: Vec<usize> = probabilities
        .outer_iter()
        .map(|row| argmax(row.iter().copied()))
        .collect();
    let run = || -> Result<Evaluation> {
        let cm = confusion_matrix(&predicted, actual, k)?;
        let loss = categorical_cross_entropy(probabilities, actual)?;
        let acc = accuracy(&cm)?;
        let p = precision(&cm, averaging)?;
        let r = recall(&cm, averaging)?;
        let a = auc(probabilities, actual, averaging)?;
        let mut warnings = p.warnings;
        warnings.extend(r.warnings);
        warnings.extend(a.warnings);
        Ok(Evaluation {
            report: MetricsReport {
                set_name: set_name.to_string(),
                loss,
                accuracy: acc,
                precision: p.value,
                recall: r.value,
                auc: a.value,
                averaging,
            },
            confusion: cm,
            warnings,
        })
    };
    run().map_err(|e| with_set(set_name, e))
}

/// Runs inference over `index` in batches and scores the result.
pub fn evaluate<P: Predictor + ?Sized>(
    model: &P,
    index: &DatasetIndex,
    set_name: &str,
    averaging: Averaging,
    batch_size: usize,
) -> Result<Evaluation> {
    if index.is_empty() {
        return Err(Error::invalid(format!("{set_name}: cannot evaluate an empty index")));
    }
    let opts = LoadOptions {
        input_size: model.input_size(),
        ..LoadOptions::default()
    };
    let mut probs = Array2::<f64>::zeros((index.len(), model.num_classes()));
    let bs = batch_size.max(1);
    for (i, chunk) in index.samples().chunks(bs).enumerate() {
        let batch = load_batch(chunk, &opts)?;
        let p = model.predict_batch(&batch)?;
        if p.dim() != (chunk.len(), model.num_classes()) {
            return Err(Error::invalid("predictor returned a probability matrix of the wrong shape"));
        }
        probs.slice_mut(s![i * bs..i * bs + chunk.len(), ..]).assign(&p);
    }
    evaluate_predictions(&probs, &index.labels(), set_name, averaging)
}

/// Train minus validation accuracy, as a fraction.
pub fn accuracy_gap(train: &MetricsReport, val: &MetricsReport) -> f64 {
    train.accuracy - val.accuracy
}
