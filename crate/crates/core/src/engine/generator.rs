use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::engine::objective::{evaluate_objective, LossComponents};
use crate::engine::DistillConfig;
use crate::error::{Error, Result};
use crate::nn::{check_ensemble, sgd_step, Mode, ModelParams, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorMode {
    /// Conditional network: noise ⊕ one-hot label → sample.
    Network,
    /// Optimize the samples themselves; no network weights.
    DirectSamples,
}

impl GeneratorMode {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorMode::Network => "network",
            GeneratorMode::DirectSamples => "direct",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "network" => Some(GeneratorMode::Network),
            "direct" => Some(GeneratorMode::DirectSamples),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub mode: GeneratorMode,
    pub noise_dim: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Samples produced per epoch, and so the size of the archive.
    pub sample_count: usize,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::arg("generator epoch budget must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("generator learning rate must be positive"));
        }
        if self.batch_size < 2 || self.sample_count < 2 {
            return Err(Error::arg("generator batches need at least two samples"));
        }
        if self.mode == GeneratorMode::Network && self.noise_dim == 0 {
            return Err(Error::arg("noise dimension must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorState {
    /// Maps `noise_dim + class_count` inputs to a sample.
    pub network: ModelParams,
    pub noise_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl GeneratorState {
    pub fn init<R: Rng + ?Sized>(
        cfg: &GeneratorConfig,
        feature_dim: usize,
        class_count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        // The output layer is linear; `mlp` names it by class count.
        let spec = ModelSpec::mlp(cfg.noise_dim + class_count, &cfg.hidden, feature_dim, true);
        Ok(Self {
            network: ModelParams::init(&spec, rng)?,
            noise_dim: cfg.noise_dim,
            learning_rate: cfg.learning_rate,
            epochs: cfg.epochs,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.network.class_count()
    }

    pub fn class_count(&self) -> usize {
        self.network.input_width() - self.noise_dim
    }

    fn inputs<R: Rng + ?Sized>(&self, labels: &[usize], rng: &mut R) -> Array2<f64> {
        let k = self.class_count();
        let mut x = Array2::zeros((labels.len(), self.noise_dim + k));
        for (mut row, &y) in x.rows_mut().into_iter().zip(labels) {
            for v in row.slice_mut(s![..self.noise_dim]) {
                *v = rng.sample(StandardNormal);
            }
            row[self.noise_dim + y] = 1.0;
        }
        x
    }

    /// Samples for the given labels in eval mode.
    pub fn generate<R: Rng + ?Sized>(&self, labels: &[usize], rng: &mut R) -> Result<Array2<f64>> {
        self.network.predict(self.inputs(labels, rng).view())
    }
}

/// Synthetic samples with their conditioning labels and the teachers' view of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBatch {
    pub samples: Array2<f64>,
    pub labels: Vec<usize>,
    /// Averaged ensemble logits.
    pub ensemble_logits: Array2<f64>,
    pub server_logits: Option<Array2<f64>>,
}

impl SyntheticBatch {
    pub fn new(
        samples: Array2<f64>,
        labels: Vec<usize>,
        ensemble_logits: Array2<f64>,
        server_logits: Option<Array2<f64>>,
    ) -> Result<Self> {
        let n = samples.nrows();
        if labels.len() != n
            || ensemble_logits.nrows() != n
            || server_logits.as_ref().is_some_and(|s| s.nrows() != n)
        {
            return Err(Error::arg("synthetic batch fields disagree on row count"));
        }
        Ok(Self {
            samples,
            labels,
            ensemble_logits,
            server_logits,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self, indices: &[usize]) -> SyntheticBatch {
        SyntheticBatch {
            samples: self.samples.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ensemble_logits: self.ensemble_logits.select(Axis(0), indices),
            server_logits: self.server_logits.as_ref().map(|s| s.select(Axis(0), indices)),
        }
    }

    pub fn concat(parts: &[SyntheticBatch]) -> Result<SyntheticBatch> {
        let views = |f: &dyn Fn(&SyntheticBatch) -> ArrayView2<f64>| -> Result<Array2<f64>> {
            let v: Vec<ArrayView2<f64>> = parts.iter().map(f).collect();
            concatenate(Axis(0), &v).map_err(|e| Error::arg(e.to_string()))
        };
        if parts.is_empty() {
            return Err(Error::arg("nothing to concatenate"));
        }
        let server_logits = if parts.iter().all(|p| p.server_logits.is_some()) {
            Some(views(&|p| p.server_logits.as_ref().unwrap().view())?)
        } else {
            None
        };
        SyntheticBatch::new(
            views(&|p| p.samples.view())?,
            parts.iter().flat_map(|p| p.labels.iter().copied()).collect(),
            views(&|p| p.ensemble_logits.view())?,
            server_logits,
        )
    }

    /// The samples with their conditioning labels.
    pub fn to_dataset(&self, class_count: usize) -> Result<Dataset> {
        Dataset::new(self.samples.clone(), self.labels.clone(), class_count)
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorRun {
    pub state: GeneratorState,
    /// Batches of the final epoch.
    pub archive: SyntheticBatch,
    /// Sample-weighted mean loss components of every epoch.
    pub history: Vec<LossComponents>,
}

fn batch_sizes(total: usize, batch: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = std::iter::repeat_n(batch, total / batch).collect();
    match total % batch {
        0 => {}
        // A one-row batch has degenerate statistics; fold it into its neighbour.
        1 if !sizes.is_empty() => *sizes.last_mut().unwrap() += 1,
        r => sizes.push(r),
    }
    sizes
}

fn accumulate(acc: &mut LossComponents, c: &LossComponents, w: f64) {
    acc.ce += w * c.ce;
    acc.bn += w * c.bn;
    acc.kl_gen += w * c.kl_gen;
    acc.total += w * c.total;
}

/// Trains the generator against a frozen ensemble and server. Every epoch draws fresh noise and
/// uniformly random labels for `sample_count` samples; the last epoch's batches are archived.
pub fn train_generator(
    mut state: GeneratorState,
    ensemble: &[ModelParams],
    server: &ModelParams,
    gen_cfg: &GeneratorConfig,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<GeneratorRun> {
    gen_cfg.validate()?;
    cfg.validate()?;
    check_ensemble(ensemble)?;
    let k = ensemble[0].class_count();
    if state.class_count() != k || state.feature_dim() != ensemble[0].input_width() {
        return Err(Error::IncompatibleEnsemble(
            "generator shape does not match the ensemble".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = batch_sizes(gen_cfg.sample_count, gen_cfg.batch_size);
    let n = gen_cfg.sample_count as f64;

    // Direct mode keeps one persistent set of samples and labels.
    let mut direct: Option<(Array2<f64>, Vec<usize>)> = match gen_cfg.mode {
        GeneratorMode::Network => None,
        GeneratorMode::DirectSamples => {
            let labels: Vec<usize> = (0..gen_cfg.sample_count).map(|_| rng.random_range(0..k)).collect();
            let x = Array2::from_shape_simple_fn((gen_cfg.sample_count, state.feature_dim()), || {
                rng.sample(StandardNormal)
            });
            Some((x, labels))
        }
    };

    let mut history = Vec::with_capacity(gen_cfg.epochs);
    let mut archive = Vec::new();
    for epoch in 0..gen_cfg.epochs {
        let last = epoch + 1 == gen_cfg.epochs;
        let mut mean = LossComponents::default();
        let mut offset = 0;
        for &size in &sizes {
            let batch = match &mut direct {
                None => {
                    let labels: Vec<usize> = (0..size).map(|_| rng.random_range(0..k)).collect();
                    let z = state.inputs(&labels, &mut rng);
                    let fwd = state.network.forward(z.view(), Mode::Train)?;
                    let eval = evaluate_objective(
                        fwd.logits.view(),
                        &labels,
                        ensemble,
                        server,
                        cfg.gamma1,
                        cfg.gamma2,
                    )?;
                    let (grads, _) = state.network.backward(&fwd, eval.d_samples.view(), None)?;
                    sgd_step(&mut state.network, &grads, gen_cfg.learning_rate)?;
                    state.network.absorb_bn_stats(&fwd.bn_stats)?;
                    accumulate(&mut mean, &eval.components, size as f64 / n);
                    SyntheticBatch::new(fwd.logits, labels, eval.ensemble_logits, Some(eval.server_logits))?
                }
                Some((x, labels)) => {
                    let rows = s![offset..offset + size, ..];
                    let y = &labels[offset..offset + size];
                    let before = x.slice(rows).to_owned();
                    let eval = evaluate_objective(before.view(), y, ensemble, server, cfg.gamma1, cfg.gamma2)?;
                    // Per-sample step: undo the batch-mean scaling.
                    let step = eval.d_samples * (gen_cfg.learning_rate * size as f64);
                    let mut block = x.slice_mut(rows);
                    block -= &step;
                    accumulate(&mut mean, &eval.components, size as f64 / n);
                    SyntheticBatch::new(
                        before,
                        y.to_vec(),
                        eval.ensemble_logits,
                        Some(eval.server_logits),
                    )?
                }
            };
            offset += size;
            if last {
                archive.push(batch);
            }
        }
        if !mean.total.is_finite() {
            return Err(Error::Domain(format!(
                "generator loss diverged at epoch {epoch} ({mean:?}); lower the learning rate or the loss weights"
            )));
        }
        history.push(mean);
    }
    Ok(GeneratorRun {
        state,
        archive: SyntheticBatch::concat(&archive)?,
        history,
    })
}
