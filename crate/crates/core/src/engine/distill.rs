use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::SyntheticBatch;
use crate::error::{Error, Result};
use crate::nn::{average_logits, kl_divergence, loss_and_gradients, minibatches, sgd_step, Mode, ModelParams, Objective};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    /// Weight of the batch-norm statistic term in the generator loss.
    pub gamma1: f64,
    /// Weight of the teacher/student agreement term in the generator loss.
    pub gamma2: f64,
    /// Server learning rate.
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0 && self.gamma1.is_finite() && self.gamma2.is_finite()) {
            return Err(Error::arg("loss weights must be finite and non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("server learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be positive"));
        }
        Ok(())
    }
}

/// Mean KL(ensemble ‖ student) over a batch, eval mode on both sides.
pub fn distill_loss(student: &ModelParams, teacher_logits: &Array2<f64>, batch: &SyntheticBatch) -> Result<f64> {
    kl_divergence(teacher_logits.view(), student.predict(batch.samples.view())?.view())
}

/// Minibatch SGD of the server on KL(ensemble ‖ server) over the synthetic archive. Returns the
/// trained server and the sample-weighted training loss of each epoch.
pub fn distill_server(
    mut server: ModelParams,
    ensemble: &[ModelParams],
    archive: &SyntheticBatch,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<(ModelParams, Vec<f64>)> {
    cfg.validate()?;
    if archive.is_empty() {
        return Err(Error::arg("synthetic archive is empty"));
    }
    let teacher = average_logits(ensemble, archive.samples.view())?;
    if teacher.ncols() != server.class_count() {
        return Err(Error::IncompatibleEnsemble(format!(
            "server has {} classes, ensemble {}",
            server.class_count(),
            teacher.ncols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut total = 0.0;
        for idx in minibatches(archive.len(), cfg.batch_size, &mut rng) {
            let x = archive.samples.select(Axis(0), &idx);
            let t = teacher.select(Axis(0), &idx);
            let (loss, fwd, grads, _) =
                loss_and_gradients(&server, x.view(), Mode::Train, &Objective::Distill(t.view()))?;
            sgd_step(&mut server, &grads, cfg.learning_rate)?;
            server.absorb_bn_stats(&fwd.bn_stats)?;
            total += loss * idx.len() as f64;
        }
        history.push(total / archive.len() as f64);
    }
    Ok((server, history))
}
