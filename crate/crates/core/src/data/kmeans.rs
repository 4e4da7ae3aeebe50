use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Inertia after every assignment step; non-increasing.
    pub inertia_history: Vec<f64>,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid of every point (ties to the lower index) and the resulting inertia.
fn assign(points: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip()
}

fn plus_plus_seed<R: Rng + ?Sized>(points: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    centroids.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, centroids.row(0))).collect();
    for j in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // Every point already coincides with a centroid.
            Err(_) => rng.random_range(0..n),
        };
        centroids.row_mut(j).assign(&points.row(pick));
        for (d, p) in d2.iter_mut().zip(points.rows()) {
            *d = d.min(sq_dist(p, centroids.row(j)));
        }
    }
    centroids
}

/// Independent k-means++ starts per call; the lowest-inertia run is kept.
pub const KMEANS_RESTARTS: usize = 10;

/// Lloyd's algorithm with k-means++ seeding, best of [`KMEANS_RESTARTS`] starts. A cluster
/// that empties is moved onto the point farthest from its current centroid.
pub fn kmeans(points: ArrayView2<f64>, k: usize, max_iters: usize, seed: u64) -> Result<KMeans> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::arg("k must be positive"));
    }
    if k > n {
        return Err(Error::arg(format!("k = {k} exceeds the {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = lloyd(points, k, max_iters, &mut rng);
    for _ in 1..KMEANS_RESTARTS {
        let run = lloyd(points, k, max_iters, &mut rng);
        if run.inertia() < best.inertia() {
            best = run;
        }
    }
    Ok(best)
}

fn lloyd<R: Rng + ?Sized>(points: ArrayView2<f64>, k: usize, max_iters: usize, rng: &mut R) -> KMeans {
    let n = points.nrows();
    let mut centroids = plus_plus_seed(points, k, rng);
    let (mut assignments, mut dists) = assign(points, &centroids);
    let mut inertia_history = vec![dists.iter().sum()];

    for _ in 0..max_iters {
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (p, &a) in points.rows().into_iter().zip(&assignments) {
            let mut row = sums.row_mut(a);
            row += &p;
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                let mean = &sums.row(j) / counts[j] as f64;
                centroids.row_mut(j).assign(&mean);
            }
        }
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = (0..n)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("n >= k > 0");
            centroids.row_mut(j).assign(&points.row(far));
            dists[far] = 0.0;
        }
        let (next, next_dists) = assign(points, &centroids);
        inertia_history.push(next_dists.iter().sum());
        let settled = next == assignments;
        assignments = next;
        dists = next_dists;
        if settled {
            break;
        }
    }
    KMeans {
        centroids,
        assignments,
        inertia_history,
    }
}
