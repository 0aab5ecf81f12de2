//! The classifier: a pluggable convolutional backbone plus the
//! pooling/dense/dropout/softmax head.

mod backbone;
mod checkpoint;
mod classifier;
mod config;
mod head;

pub use backbone::{ConvLayer, ConvShape, ConvStack};
pub use checkpoint::{checkpoint_config, load_backbone_weights, load_checkpoint, save_backbone_weights, save_checkpoint};
pub use classifier::{build_classifier, ClassifierModel, ProbabilityMatrix};
pub(crate) use classifier::StepInput;
pub use config::{FreezePolicy, ModelConfig, WeightSource, DEFAULT_BACKBONE, STUB_BACKBONE};
pub use head::{softmax, Head};
