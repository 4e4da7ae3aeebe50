use std::io::Write;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Labeled feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::arg(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::arg("a dataset needs at least one sample"));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::arg(format!("label {l} out of range for {class_count} classes")));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.features.select(Axis(0), indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_count,
        )
    }

    /// CSV with columns `label, x0, x1, ...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.feature_dim()).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for (row, label) in self.features.rows().into_iter().zip(&self.labels) {
            let mut rec = vec![label.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Isotropic unit-variance Gaussian blobs, one per class, centered on seeded random
/// directions scaled by `separation`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub centers: Array2<f64>,
}

impl GaussianMixture {
    pub fn new(seed: u64, class_count: usize, dim: usize, separation: f64) -> Result<Self> {
        if class_count == 0 || dim == 0 {
            return Err(Error::arg("class count and dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centers = Array2::<f64>::zeros((class_count, dim));
        for mut row in centers.rows_mut() {
            let dir: Array1<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let len = dir.dot(&dir).sqrt().max(f64::MIN_POSITIVE);
            row.assign(&(dir * (separation / len)));
        }
        Ok(Self { centers })
    }

    pub fn class_count(&self) -> usize {
        self.centers.nrows()
    }

    /// `n_per_class` samples of every class, class-major order.
    pub fn sample<R: Rng + ?Sized>(&self, n_per_class: usize, rng: &mut R) -> Result<Dataset> {
        if n_per_class == 0 {
            return Err(Error::arg("n_per_class must be positive"));
        }
        let (k, dim) = self.centers.dim();
        let mut features = Array2::zeros((k * n_per_class, dim));
        let mut labels = Vec::with_capacity(k * n_per_class);
        for c in 0..k {
            for i in 0..n_per_class {
                let mut row = features.row_mut(c * n_per_class + i);
                for (v, &m) in row.iter_mut().zip(self.centers.row(c)) {
                    *v = m + rng.sample::<f64, _>(StandardNormal);
                }
                labels.push(c);
            }
        }
        Dataset::new(features, labels, k)
    }
}

/// Procedural stand-in for an image dataset; deterministic per seed.
pub fn generate_gaussian_dataset(
    seed: u64,
    class_count: usize,
    dim: usize,
    n_per_class: usize,
    separation: f64,
) -> Result<Dataset> {
    let mixture = GaussianMixture::new(seed, class_count, dim, separation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da7a);
    mixture.sample(n_per_class, &mut rng)
}

/// Normalized class histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    pub probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn uniform_over(classes: &[usize], class_count: usize) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::arg("empty class set"));
        }
        let mut probs = vec![0.0; class_count];
        for &c in classes {
            *probs
                .get_mut(c)
                .ok_or_else(|| Error::arg(format!("class {c} out of range")))? = 1.0;
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Self { probs })
    }

    pub fn class_count(&self) -> usize {
        self.probs.len()
    }

    pub fn linf_distance(&self, other: &ClassDistribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn class_distribution(labels: &[usize], class_count: usize) -> Result<ClassDistribution> {
    if labels.is_empty() {
        return Err(Error::arg("cannot take the class distribution of no labels"));
    }
    let mut counts = vec![0usize; class_count];
    for &l in labels {
        *counts
            .get_mut(l)
            .ok_or_else(|| Error::arg(format!("label {l} out of range for {class_count} classes")))? += 1;
    }
    let n = labels.len() as f64;
    Ok(ClassDistribution {
        probs: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_gaussian_dataset(4, 3, 5, 10, 2.0).unwrap();
        let b = generate_gaussian_dataset(4, 3, 5, 10, 2.0).unwrap();
        assert_eq!(a, b);
        let c = generate_gaussian_dataset(5, 3, 5, 10, 2.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_separation_collapses_centers() {
        let m = GaussianMixture::new(1, 4, 3, 0.0).unwrap();
        assert!(m.centers.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn histogram_cases() {
        assert_eq!(class_distribution(&[0, 0, 1, 1], 2).unwrap().probs, vec![0.5, 0.5]);
        assert_eq!(class_distribution(&[2, 2], 3).unwrap().probs, vec![0.0, 0.0, 1.0]);
        assert!(class_distribution(&[], 3).is_err());
        assert!(class_distribution(&[3], 3).is_err());
    }

    #[test]
    fn histogram_of_concatenation_is_weighted_mean() {
        let a = [0, 1, 1, 2];
        let b = [2, 2];
        let joint: Vec<usize> = a.iter().chain(&b).copied().collect();
        let da = class_distribution(&a, 3).unwrap();
        let db = class_distribution(&b, 3).unwrap();
        let dj = class_distribution(&joint, 3).unwrap();
        for c in 0..3 {
            let want = (4.0 * da.probs[c] + 2.0 * db.probs[c]) / 6.0;
            assert!((dj.probs[c] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        assert!(Dataset::new(Array2::zeros((2, 2)), vec![0, 5], 3).is_err());
        assert!(Dataset::new(Array2::zeros((2, 2)), vec![0], 3).is_err());
    }
}
