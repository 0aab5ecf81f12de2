//! Transfer-learning pipeline for 21-class bone-marrow cell images: dataset
//! indexing and splitting, a frozen-backbone classifier with a trainable
//! head, Adam training, and confusion-matrix evaluation.

pub mod config;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod reporting;
pub mod training;

pub use dataset::{ClassTaxonomy, DatasetIndex, ImageBatch, SampleRecord};
pub use error::{Error, ErrorKind, Result};
pub use metrics::{Averaging, ConfusionMatrix, MetricsReport, PerClassCounts};
pub use model::{ClassifierModel, ModelConfig, ProbabilityMatrix};
pub use reporting::RunManifest;
pub use training::{TrainConfig, TrainHistory};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
