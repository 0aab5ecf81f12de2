//! Loss, optimizer and the epoch/batch training loop.

mod adam;
mod config;
mod loss;
mod trainer;

pub use adam::Adam;
pub use config::{Loss, Optimizer, TrainConfig};
pub use loss::{categorical_cross_entropy, PROBABILITY_FLOOR};
pub use trainer::{
    argmax, predict_records, steps_per_epoch, train, train_with_observer, EpochRecord, TrainHistory,
    HISTORY_CSV_HEADER,
};
