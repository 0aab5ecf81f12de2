use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::TrainConfig;
use super::loss::categorical_cross_entropy;
use crate::dataset::{load_batch, DatasetIndex, LoadOptions, SampleRecord};
use crate::error::{Error, Result};
use crate::model::{ClassifierModel, ProbabilityMatrix, StepInput};

/// Inference-mode loss and accuracy on both sets after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Training-set loss before the first update.
    pub initial_train_loss: f64,
    pub initial_train_accuracy: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// `epoch,train_loss,train_acc,val_loss,val_acc` rows with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

pub const HISTORY_CSV_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.train_loss, self.train_accuracy, self.val_loss, self.val_accuracy
        )
    }
}

pub fn steps_per_epoch(samples: usize, batch_size: usize) -> usize {
    samples.div_ceil(batch_size)
}

/// Pooled features for a frozen backbone, or image records to decode per
/// batch.
enum Inputs<'a> {
    Cached(Array2<f32>),
    Images(&'a [SampleRecord]),
}

fn extract_features(model: &ClassifierModel, records: &[SampleRecord], batch_size: usize) -> Result<Array2<f32>> {
    let opts = LoadOptions {
        input_size: model.config().input_size,
        ..LoadOptions::default()
    };
    let mut out = Array2::zeros((records.len(), model.backbone().out_channels()));
    for (chunk_idx, chunk) in records.chunks(batch_size).enumerate() {
        let batch = load_batch(chunk, &opts)?;
        let f = model.features(&batch.pixels)?;
        let start = chunk_idx * batch_size;
        out.slice_mut(ndarray::s![start..start + chunk.len(), ..]).assign(&f);
    }
    Ok(out)
}

/// Inference-mode probabilities for every sample, in index order.
pub fn predict_records(model: &ClassifierModel, records: &[SampleRecord], batch_size: usize) -> Result<ProbabilityMatrix> {
    let features = extract_features(model, records, batch_size.max(1))?;
    model.probabilities_from_features(&features)
}

fn accuracy_of(probs: &ProbabilityMatrix, labels: &[usize]) -> f64 {
    let correct = probs
        .outer_iter()
        .zip(labels)
        .filter(|(row, &label)| argmax(row.iter().copied()) == label)
        .count();
    correct as f64 / labels.len() as f64
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn inference_scores(
    model: &ClassifierModel,
    inputs: &Inputs<'_>,
    labels: &[usize],
    batch_size: usize,
) -> Result<(f64, f64)> {
    let probs = match inputs {
        Inputs::Cached(f) => model.probabilities_from_features(f)?,
        Inputs::Images(records) => predict_records(model, records, batch_size)?,
    };
    let loss = categorical_cross_entropy(&probs, labels)?;
    Ok((loss, accuracy_of(&probs, labels)))
}

pub fn train(
    model: ClassifierModel,
    train_idx: &DatasetIndex,
    val_idx: &DatasetIndex,
    config: &TrainConfig,
) -> Result<(ClassifierModel, TrainHistory)> {
    train_with_observer(model, train_idx, val_idx, config, |_, _| Ok(()))
}

/// Runs `config.epochs` passes of shuffled mini-batch Adam updates.
/// `observer` sees the model and record after every epoch (checkpointing,
/// history files); an error from it stops training.
pub fn train_with_observer(
    mut model: ClassifierModel,
    train_idx: &DatasetIndex,
    val_idx: &DatasetIndex,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord, &ClassifierModel) -> Result<()>,
) -> Result<(ClassifierModel, TrainHistory)> {
    config.validate()?;
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let k = model.num_classes();
    for s in train_idx.samples().iter().chain(val_idx.samples()) {
        if s.label >= k {
            return Err(Error::invalid(format!("sample `{}` has label {} but the model has {k} classes", s.id, s.label)));
        }
    }
    let train_labels = train_idx.labels();
    let val_labels = val_idx.labels();
    let bs = config.batch_size;

    // A frozen backbone never changes, so its features are computed once.
    let cache = model.backbone_frozen() && !config.augment;
    let (train_inputs, val_inputs) = if cache {
        (
            Inputs::Cached(extract_features(&model, train_idx.samples(), bs)?),
            Inputs::Cached(extract_features(&model, val_idx.samples(), bs)?),
        )
    } else {
        (Inputs::Images(train_idx.samples()), Inputs::Images(val_idx.samples()))
    };

    let (initial_loss, initial_acc) = inference_scores(&model, &train_inputs, &train_labels, bs)?;
    let mut history = TrainHistory {
        initial_train_loss: initial_loss,
        initial_train_accuracy: initial_acc,
        epochs: Vec::with_capacity(config.epochs),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.learning_rate, config.beta1, config.beta2, config.epsilon);
    let mut order: Vec<usize> = (0..train_labels.len()).collect();
    let load_opts = LoadOptions {
        input_size: model.config().input_size,
        augment: config.augment,
        seed: config.seed,
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(bs).enumerate() {
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            let pixels;
            let input = match &train_inputs {
                Inputs::Cached(f) => StepInput::Features(f.select(Axis(0), chunk)),
                Inputs::Images(records) => {
                    let recs: Vec<SampleRecord> = chunk.iter().map(|&i| records[i].clone()).collect();
                    let opts = LoadOptions {
                        seed: load_opts.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                        ..load_opts
                    };
                    pixels = load_batch(&recs, &opts)?.pixels;
                    StepInput::Pixels(&pixels)
                }
            };
            let (probs, grads) = model.forward_backward(input, &labels, &mut rng)?;
            let loss = categorical_cross_entropy(&probs, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step: step + 1, loss });
            }
            adam.step(model.trainable_slices_mut(), grads.slices());
        }

        let steps = steps_per_epoch(train_labels.len(), bs);
        let (train_loss, train_accuracy) = inference_scores(&model, &train_inputs, &train_labels, bs)?;
        let (val_loss, val_accuracy) = inference_scores(&model, &val_inputs, &val_labels, bs)?;
        for loss in [train_loss, val_loss] {
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step: steps, loss });
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        };
        log::info!(
            "epoch {epoch}: loss {train_loss:.4} acc {train_accuracy:.4} | val loss {val_loss:.4} acc {val_accuracy:.4}"
        );
        observer(&record, &model)?;
        history.epochs.push(record);
    }
    debug_assert_eq!(
        adam.steps_taken() as usize,
        config.epochs * steps_per_epoch(train_labels.len(), bs)
    );
    Ok((model, history))
}
