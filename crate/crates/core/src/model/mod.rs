//! The binaural intelligibility prediction head.

pub mod checkpoint;
mod config;
pub mod head;
pub mod params;

pub use checkpoint::Checkpoint;
pub use config::HeadConfig;
pub use head::{
    downsample_time, predict, predict_downsampled, BinauralInput, Channel, CrossSite, HeadOutput,
    HeadPass, Mode, ShapeTrace, Stage,
};
pub use params::{HeadParams, HeadVars};
