//! Classification head: pooled features -> dense + ReLU -> dropout ->
//! dense -> softmax.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub hidden_weight: Array2<f32>,
    pub hidden_bias: Array1<f32>,
    pub output_weight: Array2<f32>,
    pub output_bias: Array1<f32>,
}

pub(crate) struct HeadTrace {
    input: Array2<f32>,
    hidden_pre: Array2<f32>,
    /// Inverted-dropout multipliers, `0` or `1 / (1 - rate)`.
    mask: Option<Array2<f32>>,
    dropped: Array2<f32>,
}

pub(crate) struct HeadGrad {
    pub hidden_weight: Array2<f32>,
    pub hidden_bias: Array1<f32>,
    pub output_weight: Array2<f32>,
    pub output_bias: Array1<f32>,
    pub input: Array2<f32>,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f32> {
    let limit = (6.0 / (rows + cols) as f32).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

/// Row-wise softmax, computed in f64.
pub fn softmax(logits: &Array2<f32>) -> Array2<f64> {
    let mut probs = logits.mapv(f64::from);
    for mut row in probs.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    probs
}

impl Head {
    pub fn random(features: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        Self {
            hidden_weight: glorot(features, hidden, rng),
            hidden_bias: Array1::zeros(hidden),
            output_weight: glorot(hidden, classes, rng),
            output_bias: Array1::zeros(classes),
        }
    }

    pub fn input_features(&self) -> usize {
        self.hidden_weight.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.output_bias.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.hidden_weight.len() + self.hidden_bias.len() + self.output_weight.len() + self.output_bias.len()
    }

    /// Inference logits (dropout inactive).
    pub fn logits(&self, features: &Array2<f32>) -> Array2<f32> {
        let mut hidden = features.dot(&self.hidden_weight) + &self.hidden_bias;
        hidden.mapv_inplace(|v| v.max(0.0));
        hidden.dot(&self.output_weight) + &self.output_bias
    }

    pub(crate) fn forward_train(
        &self,
        features: Array2<f32>,
        dropout_rate: f64,
        rng: &mut impl Rng,
    ) -> (Array2<f32>, HeadTrace) {
        let hidden_pre = features.dot(&self.hidden_weight) + &self.hidden_bias;
        let mut dropped = hidden_pre.mapv(|v| v.max(0.0));
        let mask = (dropout_rate > 0.0).then(|| {
            let keep = 1.0 - dropout_rate;
            let scale = (1.0 / keep) as f32;
            let mask = Array2::from_shape_simple_fn(dropped.dim(), || {
                if rng.random_bool(keep) {
                    scale
                } else {
                    0.0
                }
            });
            dropped *= &mask;
            mask
        });
        let logits = dropped.dot(&self.output_weight) + &self.output_bias;
        let trace = HeadTrace {
            input: features,
            hidden_pre,
            mask,
            dropped,
        };
        (logits, trace)
    }

    pub(crate) fn backward(&self, trace: &HeadTrace, dlogits: &Array2<f32>) -> HeadGrad {
        let output_weight = trace.dropped.t().dot(dlogits);
        let output_bias = dlogits.sum_axis(Axis(0));
        let mut dhidden = dlogits.dot(&self.output_weight.t());
        if let Some(mask) = &trace.mask {
            dhidden *= mask;
        }
        Zip::from(&mut dhidden).and(&trace.hidden_pre).for_each(|g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        HeadGrad {
            hidden_weight: trace.input.t().dot(&dhidden),
            hidden_bias: dhidden.sum_axis(Axis(0)),
            input: dhidden.dot(&self.hidden_weight.t()),
            output_weight,
            output_bias,
        }
    }
}
