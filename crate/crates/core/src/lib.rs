//! Volumetric two-channel convolutional classifier with a training and
//! cross-validation protocol, a prognostic score taken from the class-0
//! logit, and the statistics used to evaluate it (ROC/AUC, DeLong,
//! McNemar, Pearson, Welch).
//!
//! Module map:
//!
//! * [`tensor`]: dense arrays, first axis fastest.
//! * [`ops`]: layer kernels and their gradients.
//! * [`network`]: layer chain, parameters, checkpoints.
//! * [`optim`]: SGD with momentum, learning-rate schedule, k-fold CV.
//! * [`preprocess`]: rescaling, mean subtraction, volume and manifest I/O.
//! * [`stats`]: evaluation battery.
//! * [`phantom`]: synthetic two-channel subjects.

pub mod error;
pub mod network;
pub mod optim;
pub mod phantom;
pub mod ops;
pub mod preprocess;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
