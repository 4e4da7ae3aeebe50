//! The one-shot server pipeline: synthetic data generation from the uploaded orbit models,
//! distillation into the server model, and virtual retraining of server clones.

mod distill;
mod generator;
mod objective;
mod pipeline;
mod retrain;

pub use distill::{distill_server, DistillConfig};
pub use generator::{train_generator, GeneratorConfig, GeneratorMode, GeneratorRun, GeneratorState, SyntheticBatch};
pub use objective::{bn_regularizer, generator_loss, generator_loss_input_grad, kl_gen_regularizer, LossComponents};
pub use pipeline::{heldout_distill_loss, run_leoshot, LeoShotConfig, LeoShotOutcome, Phase, PhaseMetrics};
pub use retrain::{
    class_quota, pseudo_label, resample_partition, virtual_retrain, ClusterSpace, RetrainConfig, RetrainOutcome,
    Partition, PseudoLabeler, VirtualPool,
};
