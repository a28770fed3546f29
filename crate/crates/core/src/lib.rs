//! Fault diagnosis from vibration and acoustic windows with three networks
//! written from scratch: a 1D CNN over vibration, a CNN+LSTM over acoustics,
//! and a two-branch model that fuses both.
//!
//! All arithmetic is `f64` and every random choice flows from an explicit
//! seed, so training runs are bit-reproducible.

pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{Model, ModelKind, ModelSpec};
pub use parallel::Execution;
pub use tensor::{Rng, Tensor};
pub use training::{fit, TrainConfig, TrainReport};
