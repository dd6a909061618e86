//! Text classifiers that estimate their own confidence.
//!
//! The crate trains a hashed bag-of-n-grams classifier with a second,
//! binary head that predicts whether the main prediction is correct. Its
//! training data comes from K-fold cross-annotation of the training set,
//! balanced by down-sampling and paired with augmented negatives for a
//! consistency term. Baseline confidence scorers, evaluation metrics and
//! three downstream protocols (selective classification, adversarial sample
//! detection and model cascading) are included.
//!
//! The numeric core is generic over [`Scalar`] (`f32`/`f64`); the aliases
//! below fix it to `f64`, which the pipeline and CLI use.

pub mod apps;
pub mod augment;
pub mod calibrators;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod toast;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Params = model::ModelParameters<f64>;
pub type Params32 = model::ModelParameters<f32>;
pub type Features = model::SparseVector<f64>;
pub type Calibrator = calibrators::Calibrator<f64>;
pub type ConfidenceLog = calibrators::ConfidenceLog<f64>;
