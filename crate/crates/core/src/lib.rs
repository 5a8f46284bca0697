//! Binaural speech intelligibility prediction from multi-layer speech model
//! features.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*32` and
//! `*64` aliases below fix the precision.

pub mod autodiff;
mod bytes;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use autodiff::{Gradients, Graph, Var};
pub use error::{Error, ErrorClass, Result};
pub use rng::RngStream;
pub use scalar::{Precision, Scalar};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type HeadParams32 = model::HeadParams<f32>;
pub type HeadParams64 = model::HeadParams<f64>;
pub type Checkpoint32 = model::Checkpoint<f32>;
pub type Checkpoint64 = model::Checkpoint<f64>;
pub type BinauralInput32 = model::BinauralInput<f32>;
pub type BinauralInput64 = model::BinauralInput<f64>;
