#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use leoshot::config::ExperimentConfig;
use leoshot::nn::{ModelParams, ModelSpec};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Minimum k=2 inertia over every two-way split of `points`, by enumeration.
pub fn exhaustive_k2_inertia(points: &Array2<f64>) -> f64 {
    let n = points.nrows();
    assert!((2..=20).contains(&n));
    let sse = |members: &[usize]| -> f64 {
        let d = points.ncols();
        let mut mean = vec![0.0; d];
        for &i in members {
            for j in 0..d {
                mean[j] += points[[i, j]];
            }
        }
        mean.iter_mut().for_each(|m| *m /= members.len() as f64);
        members
            .iter()
            .map(|&i| (0..d).map(|j| (points[[i, j]] - mean[j]).powi(2)).sum::<f64>())
            .sum()
    };
    // Point 0 is fixed in group A so each split is seen once; B must be non-empty.
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (n - 1)) - 1 {
        let (mut a, mut b) = (vec![0], Vec::new());
        for i in 1..n {
            if mask >> (i - 1) & 1 == 1 {
                a.push(i);
            } else {
                b.push(i);
            }
        }
        best = best.min(sse(&a) + sse(&b));
    }
    best
}

/// Standard-normal point cloud of 6 to 12 points in 2-D.
pub fn small_cloud(seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(6..=12);
    Array2::from_shape_simple_fn((n, 2), || rng.sample::<f64, _>(StandardNormal))
}

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// The desk-scale experiment with the given seed and extra `key=value` overrides.
pub fn desk(seed: u64, overrides: &[&str]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(&configs_dir().join("desk.conf")).unwrap();
    let mut all: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    all.push(format!("scenario.seed={seed}"));
    cfg.apply_overrides(&all).unwrap();
    cfg
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Desk scenario scaled down for fast simulation tests.
pub fn quick(seed: u64, overrides: &[&str]) -> ExperimentConfig {
    let mut all = vec![
        "training.local_epochs=3",
        "data.train_per_class=24",
        "data.test_per_class=10",
        "training.synthetic_samples=200",
        "training.generator_epochs=3",
        "training.distill_epochs=3",
        "training.retrain_max_rounds=2",
    ];
    all.extend_from_slice(overrides);
    desk(seed, &all)
}

/// Delay recomputed from dB-domain inputs without the crate's helpers.
#[allow(clippy::too_many_arguments)]
pub fn transfer_time_by_hand(
    bits: f64,
    distance: f64,
    p_dbm: f64,
    g_sat_dbi: f64,
    g_gs_dbi: f64,
    temperature: f64,
    bandwidth: f64,
    frequency: f64,
    fixed: Option<f64>,
    t_m: f64,
    t_s: f64,
) -> f64 {
    let c = 299_792_458.0;
    let k = 1.380_649e-23;
    let p = 10f64.powf((p_dbm - 30.0) / 10.0);
    let g = 10f64.powf(g_sat_dbi / 10.0) * 10f64.powf(g_gs_dbi / 10.0);
    let lambda = c / frequency;
    let path = (4.0 * PI * distance / lambda).powi(2);
    let snr = p * g / (k * temperature * bandwidth * path);
    let rate = fixed.unwrap_or(bandwidth * (1.0 + snr).ln() / 2f64.ln());
    bits / rate + distance / c + t_m + t_s
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

/// Random BN network with non-trivial running statistics.
pub fn random_bn_net(rng: &mut ChaCha8Rng) -> (ModelParams, Array2<f64>) {
    let input = rng.random_range(2..6);
    let depth = rng.random_range(1..3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..7)).collect();
    let classes = rng.random_range(2..5);
    let spec = ModelSpec::mlp(input, &hidden, classes, true);
    let mut model = ModelParams::init(&spec, rng).unwrap();
    // Shift every running statistic and trainable value off its init so no BN output sits
    // exactly on a ReLU kink (an all-dead row followed by zero mean and zero beta would).
    let running: Vec<f64> = model.running_flat().iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
    model.set_running_flat(&running).unwrap();
    let trainable: Vec<f64> = model.trainable_flat().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
    model.set_trainable_flat(&trainable).unwrap();
    let batch = random_matrix(rng.random_range(3..9), input, rng);
    (model, batch)
}
