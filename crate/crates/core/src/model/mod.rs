//! Desk-scale two-head classifier.

pub mod features;
mod io;
pub mod loss;
pub mod network;
pub mod train;

pub use features::{featurize, FeaturizerConfig, SparseVector};
pub use loss::{loss_ce, loss_kl, softmax};
pub use network::{
    argmax, Batch, CalibExample, CalibInputs, ConsistencyExample, Gradients, LossTerms, MainExample, MainOutput,
    ModelParameters, ObjectiveWeights, Prediction, Tensor,
};
pub use train::{accuracy, featurize_samples, train_main, TrainConfig, Trained};
