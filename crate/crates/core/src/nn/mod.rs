//! A small dense-network engine: forward and backward passes, batch norm with running
//! statistics, SGD, and the loss and ensemble primitives used by both protocols.

pub mod checkpoint;
mod ensemble;
pub mod gradcheck;
pub mod loss;
mod model;
mod train;

pub use ensemble::{average_logits, average_weights};
pub(crate) use ensemble::check_ensemble;
pub use gradcheck::{check_gradients, loss_and_gradients, GradCheckReport, Objective};
pub use loss::{cross_entropy, kl_divergence, softmax};
pub use model::{
    argmax_rows, sgd_step, Activation, BatchNorm, BnStats, DenseLayer, Forward, Gradients,
    LayerGrads, LayerSpec, Mode, ModelParams, ModelSpec, BN_EPSILON, BN_MOMENTUM,
};
pub use train::{accuracy, minibatches, train_classifier, SgdConfig};
