use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{kmeans, ClassDistribution};
use crate::engine::SyntheticBatch;
use crate::error::{Error, Result};
use crate::nn::{argmax_rows, average_logits, average_weights, cross_entropy, train_classifier, ModelParams, SgdConfig};

/// Space in which synthetic samples are clustered for pseudo-labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterSpace {
    Samples,
    /// Averaged ensemble logits.
    Logits,
}

impl ClusterSpace {
    pub fn name(self) -> &'static str {
        match self {
            ClusterSpace::Samples => "samples",
            ClusterSpace::Logits => "logits",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "samples" => Some(ClusterSpace::Samples),
            "logits" => Some(ClusterSpace::Logits),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrainConfig {
    /// Local epochs per clone per round.
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_rounds: usize,
    /// Minimum held-out loss improvement that resets the patience counter.
    pub tolerance: f64,
    pub patience: usize,
    pub cluster_space: ClusterSpace,
    pub kmeans_iters: usize,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            learning_rate: 0.01,
            batch_size: 32,
            max_rounds: 50,
            tolerance: 1e-4,
            patience: 3,
            cluster_space: ClusterSpace::Samples,
            kmeans_iters: 100,
        }
    }
}

impl RetrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("retraining learning rate must be positive"));
        }
        if self.batch_size == 0 || self.max_rounds == 0 || self.patience == 0 {
            return Err(Error::arg("batch size, round cap and patience must be positive"));
        }
        Ok(())
    }
}

/// Clones of the server and the synthetic rows each one trains on.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualPool {
    pub clones: Vec<ModelParams>,
    pub partitions: Vec<Partition>,
    pub epochs: usize,
}

impl VirtualPool {
    pub fn new(server: &ModelParams, partitions: Vec<Partition>, epochs: usize) -> Self {
        Self {
            clones: vec![server.clone(); partitions.len()],
            partitions,
            epochs,
        }
    }
}

/// Cluster-to-class map learned from the archive: k-means with `k = class_count`, each cluster
/// taking the most common ensemble prediction among its members (lowest class on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeler {
    pub space: ClusterSpace,
    pub centroids: Array2<f64>,
    pub cluster_class: Vec<usize>,
    /// Labels of the rows the labeler was fitted on.
    pub labels: Vec<usize>,
}

fn cluster_points(samples: ArrayView2<f64>, ensemble: &[ModelParams], space: ClusterSpace) -> Result<Array2<f64>> {
    match space {
        ClusterSpace::Samples => Ok(samples.to_owned()),
        ClusterSpace::Logits => average_logits(ensemble, samples),
    }
}

impl PseudoLabeler {
    pub fn fit(
        archive: &SyntheticBatch,
        ensemble: &[ModelParams],
        space: ClusterSpace,
        kmeans_iters: usize,
        seed: u64,
    ) -> Result<Self> {
        let logits = average_logits(ensemble, archive.samples.view())?;
        let k = logits.ncols().min(archive.len());
        let points = match space {
            ClusterSpace::Samples => archive.samples.view(),
            ClusterSpace::Logits => logits.view(),
        };
        let km = kmeans(points, k, kmeans_iters, seed)?;
        let predicted = argmax_rows(&logits);
        let mut votes = Array2::<usize>::zeros((k, logits.ncols()));
        for (&cluster, &p) in km.assignments.iter().zip(&predicted) {
            votes[[cluster, p]] += 1;
        }
        let cluster_class: Vec<usize> = votes
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        let labels = km.assignments.iter().map(|&a| cluster_class[a]).collect();
        Ok(Self {
            space,
            centroids: km.centroids,
            cluster_class,
            labels,
        })
    }

    /// Whether some cluster maps to class `c`.
    pub fn claims(&self, c: usize) -> bool {
        self.cluster_class.contains(&c)
    }

    /// Labels for new rows: the class of the nearest centroid, or the conditioning label when
    /// no cluster claims it (the same rule partitions fall back to).
    pub fn label(&self, batch: &SyntheticBatch, ensemble: &[ModelParams]) -> Result<Vec<usize>> {
        let points = cluster_points(batch.samples.view(), ensemble, self.space)?;
        Ok(points
            .rows()
            .into_iter()
            .zip(&batch.labels)
            .map(|(p, &cond)| {
                if !self.claims(cond) {
                    return cond;
                }
                let nearest = self
                    .centroids
                    .rows()
                    .into_iter()
                    .map(|c| (&c - &p).mapv(|v| v * v).sum())
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map_or(0, |(i, _)| i);
                self.cluster_class[nearest]
            })
            .collect())
    }
}

/// Pseudo-labels of the archive rows; see [`PseudoLabeler`].
pub fn pseudo_label(
    archive: &SyntheticBatch,
    ensemble: &[ModelParams],
    space: ClusterSpace,
    kmeans_iters: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    Ok(PseudoLabeler::fit(archive, ensemble, space, kmeans_iters, seed)?.labels)
}

/// Per-class counts summing to `size` that follow `target` (largest remainder).
pub fn class_quota(target: &ClassDistribution, size: usize) -> Vec<usize> {
    let raw: Vec<f64> = target.probs.iter().map(|p| p * size as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let short = size.saturating_sub(counts.iter().sum());
    for &c in order.iter().take(short) {
        counts[c] += 1;
    }
    counts
}

/// Archive rows drawn for one virtual client, with the class each row trains on.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Partition {
    pub rows: Vec<usize>,
    pub labels: Vec<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Draws `size` archive rows whose labels follow `target`. Rows carry their pseudo-label; a
/// class with too few candidates is drawn with replacement, and a class no cluster claims
/// falls back to rows generated for it, labelled with that class. Returns the partition and how
/// many classes needed either fallback.
pub fn resample_partition<R: Rng + ?Sized>(
    pseudo: &[usize],
    conditioning: &[usize],
    target: &ClassDistribution,
    size: usize,
    rng: &mut R,
) -> (Partition, usize) {
    let mut part = Partition::default();
    let mut warnings = 0;
    for (c, quota) in class_quota(target, size).into_iter().enumerate() {
        if quota == 0 {
            continue;
        }
        let mut pool: Vec<usize> = (0..pseudo.len()).filter(|&i| pseudo[i] == c).collect();
        if pool.is_empty() {
            warnings += 1;
            pool = (0..conditioning.len()).filter(|&i| conditioning[i] == c).collect();
            if pool.is_empty() {
                continue;
            }
        }
        if pool.len() >= quota {
            pool.shuffle(rng);
            part.rows.extend_from_slice(&pool[..quota]);
        } else {
            warnings += 1;
            part.rows.extend((0..quota).map(|_| *pool.choose(rng).unwrap()));
        }
        part.labels.resize(part.rows.len(), c);
    }
    (part, warnings)
}

#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    pub server: ModelParams,
    /// Held-out cross-entropy against pseudo-labels, before the first round and after each.
    pub heldout_losses: Vec<f64>,
    pub rounds: usize,
    /// Classes that had to be drawn with replacement or from conditioning labels.
    pub resample_warnings: usize,
    /// Clone-epochs times samples processed, for compute accounting.
    pub sample_epochs: usize,
    pub partitions: Vec<Partition>,
    pub pseudo_labels: Vec<usize>,
    pub heldout_labels: Vec<usize>,
}

/// Clones the server once per orbit, trains every clone on a pseudo-labelled partition drawn
/// to match that orbit's class distribution, and replaces the server with the clones' mean.
/// Rounds repeat until the held-out loss stops improving by `tolerance` for `patience` rounds
/// or `max_rounds` is reached.
pub fn virtual_retrain(
    server: &ModelParams,
    archive: &SyntheticBatch,
    heldout: &SyntheticBatch,
    ensemble: &[ModelParams],
    orbit_distributions: &[ClassDistribution],
    cfg: &RetrainConfig,
    seed: u64,
) -> Result<RetrainOutcome> {
    cfg.validate()?;
    if orbit_distributions.is_empty() {
        return Err(Error::arg("virtual retraining needs at least one orbit distribution"));
    }
    if archive.is_empty() || heldout.is_empty() {
        return Err(Error::arg("synthetic archive and held-out split must be non-empty"));
    }
    if let Some(d) = orbit_distributions.iter().find(|d| d.class_count() != server.class_count()) {
        return Err(Error::arg(format!(
            "orbit distribution over {} classes, server predicts {}",
            d.class_count(),
            server.class_count()
        )));
    }
    let l = orbit_distributions.len();
    let labeler = PseudoLabeler::fit(archive, ensemble, cfg.cluster_space, cfg.kmeans_iters, seed)?;
    let pseudo = labeler.labels.clone();
    let size = archive.len().div_ceil(l);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x007e_7a1a);
    let mut warnings = 0;
    let partitions: Vec<Partition> = orbit_distributions
        .iter()
        .map(|d| {
            let (part, w) = resample_partition(&pseudo, &archive.labels, d, size, &mut rng);
            warnings += w;
            part
        })
        .collect();
    if partitions.iter().any(Partition::is_empty) {
        return Err(Error::arg("an orbit partition is empty after resampling"));
    }
    let parts: Vec<(Array2<f64>, &[usize])> = partitions
        .iter()
        .map(|p| (archive.samples.select(Axis(0), &p.rows), p.labels.as_slice()))
        .collect();

    let heldout_labels = labeler.label(heldout, ensemble)?;
    let heldout_loss = |m: &ModelParams| -> Result<f64> {
        cross_entropy(m.predict(heldout.samples.view())?.view(), &heldout_labels)
    };
    let mut server = server.clone();
    let mut losses = vec![heldout_loss(&server)?];
    let sgd = SgdConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
    };
    let mut stalled = 0;
    let mut rounds = 0;
    let mut sample_epochs = 0;
    while rounds < cfg.max_rounds {
        let pool = VirtualPool::new(&server, partitions.clone(), cfg.epochs);
        let trained: Vec<(ModelParams, f64)> = pool
            .clones
            .into_par_iter()
            .zip(parts.par_iter())
            .enumerate()
            .map(|(i, (mut clone, (x, y)))| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(((rounds as u64) << 16) | i as u64));
                train_classifier(&mut clone, x.view(), y, &sgd, &mut rng)?;
                Ok((clone, 1.0))
            })
            .collect::<Result<_>>()?;
        sample_epochs += parts.iter().map(|(_, y)| y.len() * cfg.epochs).sum::<usize>();
        server = average_weights(&trained)?;
        rounds += 1;
        let loss = heldout_loss(&server)?;
        let improved = losses.last().unwrap() - loss;
        losses.push(loss);
        stalled = if improved < cfg.tolerance { stalled + 1 } else { 0 };
        if stalled >= cfg.patience {
            break;
        }
    }
    Ok(RetrainOutcome {
        server,
        heldout_losses: losses,
        rounds,
        resample_warnings: warnings,
        sample_epochs,
        partitions,
        pseudo_labels: pseudo,
        heldout_labels,
    })
}
