mod common;

use common::{random_bn_net, random_matrix};
use leoshot::nn::{check_gradients, Mode, ModelParams, ModelSpec, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;

#[test]
fn backward_matches_central_differences_on_bn_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for net in 0..24 {
        let (model, batch) = random_bn_net(&mut rng);
        let k = model.class_count();
        let labels: Vec<usize> = (0..batch.nrows()).map(|_| rng.random_range(0..k)).collect();
        let teacher = random_matrix(batch.nrows(), k, &mut rng);
        for mode in [Mode::Train, Mode::Eval] {
            for objective in [Objective::CrossEntropy(&labels), Objective::Distill(teacher.view())] {
                let report = check_gradients(&model, batch.view(), mode, &objective, STEP).unwrap();
                assert!(
                    report.max_rel_error <= TOLERANCE,
                    "net {net} {mode:?} {objective:?}: {}",
                    report.max_rel_error
                );
                worst = worst.max(report.max_rel_error);
                checked += report.checked;
            }
        }
    }
    println!("worst relative error {worst:e} over {checked} entries");
}

#[test]
fn plain_networks_pass_as_well() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..8 {
        let spec = ModelSpec::mlp(4, &[5, 3], 3, false);
        let model = ModelParams::init(&spec, &mut rng).unwrap();
        let batch = random_matrix(6, 4, &mut rng);
        let labels: Vec<usize> = (0..6).map(|i| i % 3).collect();
        let report = check_gradients(&model, batch.view(), Mode::Eval, &Objective::CrossEntropy(&labels), STEP).unwrap();
        assert!(report.max_rel_error <= TOLERANCE, "{}", report.max_rel_error);
    }
}
