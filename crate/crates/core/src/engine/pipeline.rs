use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ClassDistribution, Dataset};
use crate::engine::{
    distill_server, train_generator, virtual_retrain, DistillConfig, GeneratorConfig, GeneratorState, LossComponents, RetrainConfig,
    RetrainOutcome, SyntheticBatch,
};
use crate::engine::distill::distill_loss;
use crate::error::{Error, Result};
use crate::nn::{accuracy, average_logits, check_ensemble, ModelParams, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Generation,
    Distillation,
    Retraining,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Generation => "generation",
            Phase::Distillation => "distillation",
            Phase::Retraining => "retraining",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMetrics {
    pub phase: Phase,
    /// Per-epoch (generation, distillation) or per-round (retraining) loss.
    pub losses: Vec<f64>,
    /// Server accuracy on the probe set after the phase, when a probe set was given.
    pub accuracy: Option<f64>,
    /// Samples processed times epochs; drives simulated compute time.
    pub sample_epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeoShotConfig {
    pub server_hidden: Vec<usize>,
    pub server_batch_norm: bool,
    pub generator: GeneratorConfig,
    pub distill: DistillConfig,
    pub retrain: RetrainConfig,
    /// Share of the synthetic archive kept out of training.
    pub heldout_fraction: f64,
}

impl LeoShotConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.distill.validate()?;
        self.retrain.validate()?;
        if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) {
            return Err(Error::arg("held-out fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LeoShotOutcome {
    pub server: ModelParams,
    /// Server after distillation, before virtual retraining.
    pub distilled: ModelParams,
    pub phases: Vec<PhaseMetrics>,
    pub archive: SyntheticBatch,
    pub heldout: SyntheticBatch,
    pub generator: GeneratorState,
    /// Per-epoch loss components of generator training.
    pub generator_history: Vec<LossComponents>,
    pub retrain: RetrainOutcome,
}

/// Generation, distillation and virtual retraining, in that order, from the uploaded orbit
/// models and their class distributions. `probe`, if given, is only used to report accuracy.
pub fn run_leoshot(
    ensemble: &[ModelParams],
    orbit_distributions: &[ClassDistribution],
    cfg: &LeoShotConfig,
    seed: u64,
    probe: Option<&Dataset>,
) -> Result<LeoShotOutcome> {
    cfg.validate()?;
    check_ensemble(ensemble)?;
    if ensemble.len() != orbit_distributions.len() {
        return Err(Error::arg(format!(
            "{} ensemble members for {} orbit distributions",
            ensemble.len(),
            orbit_distributions.len()
        )));
    }
    let k = ensemble[0].class_count();
    let dim = ensemble[0].input_width();
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut next_seed = || seeds.random::<u64>();
    let evaluate = |m: &ModelParams| probe.map(|ds| accuracy(m, ds)).transpose();

    let server_spec = ModelSpec::mlp(dim, &cfg.server_hidden, k, cfg.server_batch_norm);
    let server = ModelParams::init(&server_spec, &mut ChaCha8Rng::seed_from_u64(next_seed()))?;
    let state = GeneratorState::init(&cfg.generator, dim, k, &mut ChaCha8Rng::seed_from_u64(next_seed()))?;

    let gen = train_generator(state, ensemble, &server, &cfg.generator, &cfg.distill, next_seed())?;
    let generation = PhaseMetrics {
        phase: Phase::Generation,
        losses: gen.history.iter().map(|c| c.total).collect(),
        accuracy: None,
        sample_epochs: cfg.generator.sample_count * cfg.generator.epochs,
    };

    let mut order: Vec<usize> = (0..gen.archive.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(next_seed()));
    let held = ((gen.archive.len() as f64 * cfg.heldout_fraction).round() as usize).clamp(1, gen.archive.len() - 1);
    let (held_rows, train_rows) = order.split_at(held);
    let heldout = gen.archive.rows(held_rows);
    let archive = gen.archive.rows(train_rows);

    let (distilled, losses) = distill_server(server, ensemble, &archive, &cfg.distill, next_seed())?;
    let distillation = PhaseMetrics {
        phase: Phase::Distillation,
        losses,
        accuracy: evaluate(&distilled)?,
        sample_epochs: archive.len() * cfg.distill.epochs,
    };

    let retrain = virtual_retrain(
        &distilled,
        &archive,
        &heldout,
        ensemble,
        orbit_distributions,
        &cfg.retrain,
        next_seed(),
    )?;
    let retraining = PhaseMetrics {
        phase: Phase::Retraining,
        losses: retrain.heldout_losses.clone(),
        accuracy: evaluate(&retrain.server)?,
        sample_epochs: retrain.sample_epochs,
    };

    Ok(LeoShotOutcome {
        server: retrain.server.clone(),
        distilled,
        phases: vec![generation, distillation, retraining],
        archive,
        heldout,
        generator: gen.state,
        generator_history: gen.history,
        retrain,
    })
}

/// KL(ensemble ‖ model) on a synthetic split.
pub fn heldout_distill_loss(model: &ModelParams, ensemble: &[ModelParams], split: &SyntheticBatch) -> Result<f64> {
    let teacher = average_logits(ensemble, split.samples.view())?;
    distill_loss(model, &teacher, split)
}
