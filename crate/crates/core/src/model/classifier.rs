use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backbone::{ConvGrad, ConvStack};
use super::checkpoint::load_backbone_weights;
use super::config::{FreezePolicy, ModelConfig, WeightSource, STUB_BACKBONE};
use super::head::{softmax, Head, HeadGrad};
use crate::dataset::ImageBatch;
use crate::error::{Error, Result};

/// `(batch, num_classes)` class probabilities; rows sum to 1.
pub type ProbabilityMatrix = Array2<f64>;

/// Pretrained-style backbone followed by the classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    config: ModelConfig,
    backbone: ConvStack,
    head: Head,
}

pub(crate) enum StepInput<'a> {
    Pixels(&'a Array4<f32>),
    /// Pooled backbone features; only valid while the backbone is frozen.
    Features(Array2<f32>),
}

pub(crate) struct Gradients {
    backbone: Vec<Option<ConvGrad>>,
    head: HeadGrad,
}

impl Gradients {
    /// Flat views in the same order as [`ClassifierModel::trainable_slices_mut`].
    pub(crate) fn slices(&self) -> Vec<&[f32]> {
        let mut out = Vec::new();
        for g in self.backbone.iter().flatten() {
            out.push(g.weight.as_slice().expect("standard layout"));
            out.push(g.bias.as_slice().expect("standard layout"));
        }
        let h = &self.head;
        for t in [
            h.hidden_weight.as_slice(),
            h.hidden_bias.as_slice(),
            h.output_weight.as_slice(),
            h.output_bias.as_slice(),
        ] {
            out.push(t.expect("standard layout"));
        }
        out
    }
}

/// Assembles the classifier. Backbone weights come from `weights.pretrained`
/// when given; otherwise bundled architectures may start from seeded random
/// weights if `weights.random_fallback` is set.
pub fn build_classifier(config: &ModelConfig, weights: &WeightSource) -> Result<ClassifierModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(weights.seed);
    let backbone = match &weights.pretrained {
        Some(path) => {
            let (name, stack) = load_backbone_weights(path)?;
            if name != config.backbone_name {
                return Err(Error::Init(format!(
                    "{} holds `{name}` weights but the model asks for `{}`",
                    path.display(),
                    config.backbone_name
                )));
            }
            stack
        }
        None if !weights.random_fallback => {
            return Err(Error::Init(format!(
                "no pretrained weights given for backbone `{}` and random initialization is not enabled",
                config.backbone_name
            )))
        }
        None if config.backbone_name == STUB_BACKBONE => ConvStack::random(&ConvStack::stub_shapes(), &mut rng),
        None => {
            return Err(Error::Init(format!(
                "backbone `{}` has no bundled architecture; supply exported weights",
                config.backbone_name
            )))
        }
    };
    ClassifierModel::from_parts(config.clone(), backbone, None, &mut rng)
}

impl ClassifierModel {
    pub(crate) fn from_parts(
        config: ModelConfig,
        backbone: ConvStack,
        head: Option<Head>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        backbone.check_shapes().map_err(Error::Init)?;
        if backbone.output_extent(config.input_size).is_none() {
            return Err(Error::Init(format!(
                "input size {} is too small for backbone `{}`",
                config.input_size, config.backbone_name
            )));
        }
        let head = match head {
            Some(h) => h,
            None => Head::random(backbone.out_channels(), config.head_dense_units, config.num_classes, rng),
        };
        if head.input_features() != backbone.out_channels()
            || head.num_classes() != config.num_classes
            || head.hidden_bias.len() != config.head_dense_units
        {
            return Err(Error::Init("head shape does not match the model configuration".into()));
        }
        Ok(Self { config, backbone, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn backbone(&self) -> &ConvStack {
        &self.backbone
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn set_freeze_policy(&mut self, policy: FreezePolicy) {
        self.config.freeze_policy = policy;
    }

    /// How many of the top backbone layers are trainable.
    pub fn trainable_backbone_layers(&self) -> usize {
        let n = self.backbone.layers.len();
        match self.config.freeze_policy {
            FreezePolicy::FreezeBackbone => 0,
            FreezePolicy::UnfreezeAll => n,
            FreezePolicy::UnfreezeTopN(k) => k.min(n),
        }
    }

    pub fn backbone_frozen(&self) -> bool {
        self.trainable_backbone_layers() == 0
    }

    pub fn parameter_count(&self) -> usize {
        self.backbone.parameter_count() + self.head.parameter_count()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        let n = self.backbone.layers.len();
        let first = n - self.trainable_backbone_layers();
        let backbone: usize = self.backbone.layers[first..].iter().map(|l| l.parameter_count()).sum();
        backbone + self.head.parameter_count()
    }

    fn check_batch(&self, pixels: &Array4<f32>) -> Result<()> {
        let (_, h, w, c) = pixels.dim();
        let s = self.config.input_size;
        if h != s || w != s || c != 3 {
            return Err(Error::invalid(format!(
                "batch images are {h}x{w}x{c}, model expects {s}x{s}x3"
            )));
        }
        Ok(())
    }

    /// Pooled backbone features for a batch of pixels.
    pub fn features(&self, pixels: &Array4<f32>) -> Result<Array2<f32>> {
        self.check_batch(pixels)?;
        Ok(self.backbone.pooled_features(pixels))
    }

    /// Head probabilities for precomputed pooled features.
    pub fn probabilities_from_features(&self, features: &Array2<f32>) -> Result<ProbabilityMatrix> {
        if features.ncols() != self.head.input_features() {
            return Err(Error::invalid(format!(
                "features have {} columns, head expects {}",
                features.ncols(),
                self.head.input_features()
            )));
        }
        Ok(softmax(&self.head.logits(features)))
    }

    /// Inference-mode class probabilities. Dropout is inactive, so repeated
    /// calls give identical output.
    pub fn predict_batch(&self, batch: &ImageBatch) -> Result<ProbabilityMatrix> {
        if batch.pixels.shape()[0] != batch.labels.len() {
            return Err(Error::invalid("batch pixel and label counts differ"));
        }
        let features = self.features(&batch.pixels)?;
        self.probabilities_from_features(&features)
    }

    /// One forward/backward pass in training mode. The returned gradients
    /// are for the mean cross-entropy over the batch.
    pub(crate) fn forward_backward(
        &self,
        input: StepInput<'_>,
        labels: &[usize],
        rng: &mut impl Rng,
    ) -> Result<(ProbabilityMatrix, Gradients)> {
        let trainable = self.trainable_backbone_layers();
        let (features, traces) = match input {
            StepInput::Pixels(pixels) => {
                self.check_batch(pixels)?;
                if trainable == 0 {
                    (self.backbone.pooled_features(pixels), None)
                } else {
                    let (f, t) = self.backbone.pooled_with_trace(pixels);
                    (f, Some(t))
                }
            }
            StepInput::Features(f) if trainable == 0 => (f, None),
            StepInput::Features(_) => {
                return Err(Error::invalid("cached features cannot train an unfrozen backbone"))
            }
        };
        if features.nrows() != labels.len() {
            return Err(Error::invalid("feature rows and labels differ in length"));
        }
        let (logits, head_trace) = self.head.forward_train(features, self.config.dropout_rate, rng);
        let probs = softmax(&logits);
        let n = labels.len() as f32;
        let mut dlogits = probs.mapv(|p| p as f32);
        for (i, &label) in labels.iter().enumerate() {
            if label >= self.config.num_classes {
                return Err(Error::invalid(format!("label {label} out of range")));
            }
            dlogits[[i, label]] -= 1.0;
        }
        dlogits /= n;
        let head_grad = self.head.backward(&head_trace, &dlogits);
        let backbone = match traces {
            Some(t) => self.backbone.backward(&t, &head_grad.input, trainable),
            None => (0..self.backbone.layers.len()).map(|_| None).collect(),
        };
        Ok((probs, Gradients { backbone, head: head_grad }))
    }

    /// Mutable flat views of the trainable tensors: trainable backbone layers
    /// bottom-up (weight, bias), then the head.
    pub(crate) fn trainable_slices_mut(&mut self) -> Vec<&mut [f32]> {
        let n = self.backbone.layers.len();
        let first = n - self.trainable_backbone_layers();
        let mut out = Vec::new();
        for layer in &mut self.backbone.layers[first..] {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        let h = &mut self.head;
        out.push(h.hidden_weight.as_slice_mut().expect("standard layout"));
        out.push(h.hidden_bias.as_slice_mut().expect("standard layout"));
        out.push(h.output_weight.as_slice_mut().expect("standard layout"));
        out.push(h.output_bias.as_slice_mut().expect("standard layout"));
        out
    }
}
