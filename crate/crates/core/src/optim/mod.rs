//! Training: learning-rate schedule, Adam and the minibatch loop.

mod adam;
mod config;
mod history;
mod schedule;
mod train;

pub use adam::{adam_step, AdamState};
pub use config::TrainConfig;
pub use history::{HistoryEntry, TrainHistory};
pub use schedule::lr_at;
pub use train::{dev_rmse, train, TrainOutcome};
