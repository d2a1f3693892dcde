//! Dual-head convolutional regressor, its training regimes and the
//! auxiliary classifier that supplies features for IS, MMD and FID.

pub mod checkpoint;
pub mod classifier;
mod layers;
mod model;
mod optim;
mod tensors;
mod train;

pub use layers::{Conv2d, Dense};
pub use model::{
    forward, grad, loss1, loss2, source_prediction, Backbone, BatchItem, ForwardOutput, Gradient,
    ModelParams, Objective, Theta1, FC2_WIDTH,
};
pub use optim::Momentum;
pub use tensors::{NamedTensor, TensorSet};
pub use train::{
    predict_synthetic_neuroscore, shuffle_eeg_within_category, train_baseline, train_two_stage,
    Example, TrainConfig, TrainTrace, TrainingSet, TwoStageOutcome,
};

#[cfg(test)]
mod tests;
