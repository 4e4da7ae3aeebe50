use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::ModelParams;

/// Convex combination of models with coefficients `d_m / Σ d`. Batch-norm running statistics
/// are combined with the same coefficients.
pub fn average_weights(models: &[(ModelParams, f64)]) -> Result<ModelParams> {
    let (first, _) = models
        .first()
        .ok_or_else(|| Error::arg("cannot average an empty model list"))?;
    if let Some((m, _)) = models.iter().find(|(m, _)| m.spec() != first.spec()) {
        return Err(Error::IncompatibleArchitecture(format!(
            "weight averaging needs one architecture; got {:?} and {:?}",
            first.spec(),
            m.spec()
        )));
    }
    if let Some((_, w)) = models.iter().find(|(_, w)| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::arg(format!("aggregation weight must be positive, got {w}")));
    }
    let total: f64 = models.iter().map(|(_, w)| w).sum();

    let mut trainable = vec![0.0; first.spec().param_count()];
    let mut running = vec![0.0; first.running_flat().len()];
    for (m, w) in models {
        let c = w / total;
        for (acc, v) in trainable.iter_mut().zip(m.trainable_flat()) {
            *acc += c * v;
        }
        for (acc, v) in running.iter_mut().zip(m.running_flat()) {
            *acc += c * v;
        }
    }
    let mut out = first.clone();
    out.set_trainable_flat(&trainable)?;
    out.set_running_flat(&running)?;
    Ok(out)
}

/// Mean of the members' eval-mode logits. Members may differ in architecture as long as they
/// share the input width and class count.
pub fn average_logits(ensemble: &[ModelParams], batch: ArrayView2<f64>) -> Result<Array2<f64>> {
    let first = ensemble
        .first()
        .ok_or_else(|| Error::IncompatibleEnsemble("empty ensemble".into()))?;
    check_ensemble(ensemble)?;
    let mut sum = Array2::zeros((batch.nrows(), first.class_count()));
    for member in ensemble {
        sum += &member.predict(batch)?;
    }
    Ok(sum / ensemble.len() as f64)
}

pub(crate) fn check_ensemble(ensemble: &[ModelParams]) -> Result<()> {
    let Some(first) = ensemble.first() else {
        return Err(Error::IncompatibleEnsemble("empty ensemble".into()));
    };
    for m in ensemble {
        if m.class_count() != first.class_count() {
            return Err(Error::IncompatibleEnsemble(format!(
                "class counts differ: {} vs {}",
                first.class_count(),
                m.class_count()
            )));
        }
        if m.input_width() != first.input_width() {
            return Err(Error::IncompatibleEnsemble(format!(
                "input widths differ: {} vs {}",
                first.input_width(),
                m.input_width()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelSpec;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64, hidden: &[usize]) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams::init(&ModelSpec::mlp(4, hidden, 3, true), &mut rng).unwrap()
    }

    #[test]
    fn averaging_identical_models_is_identity() {
        let m = model(1, &[5]);
        let avg = average_weights(&[(m.clone(), 3.0), (m.clone(), 7.0)]).unwrap();
        for (a, b) in avg.trainable_flat().iter().zip(m.trainable_flat()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_weights_give_arithmetic_mean() {
        let a = model(1, &[5]);
        let b = model(2, &[5]);
        for scale in [1.0, 1e-3, 250.0] {
            let avg = average_weights(&[(a.clone(), scale), (b.clone(), scale)]).unwrap();
            for ((x, y), z) in a.trainable_flat().iter().zip(b.trainable_flat()).zip(avg.trainable_flat()) {
                assert!((0.5 * (x + y) - z).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn heterogeneous_architectures_cannot_be_averaged() {
        let err = average_weights(&[(model(1, &[5]), 1.0), (model(2, &[6]), 1.0)]).unwrap_err();
        assert!(matches!(err, Error::IncompatibleArchitecture(_)));
    }

    #[test]
    fn single_member_ensemble_returns_its_logits() {
        let m = model(4, &[6]);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i as f64) - (j as f64) * 0.3);
        assert_eq!(average_logits(std::slice::from_ref(&m), x.view()).unwrap(), m.predict(x.view()).unwrap());
    }

    #[test]
    fn opposite_members_cancel() {
        let m = model(5, &[6]);
        let mut neg = m.clone();
        let last = neg.layers_mut().last_mut().unwrap();
        last.weight.mapv_inplace(|v| -v);
        last.bias.mapv_inplace(|v| -v);
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i * j) as f64 * 0.2);
        let avg = average_logits(&[m, neg], x.view()).unwrap();
        assert!(avg.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn heterogeneous_ensemble_is_accepted() {
        let x = Array2::zeros((2, 4));
        let out = average_logits(&[model(1, &[5]), model(2, &[9, 3])], x.view()).unwrap();
        assert_eq!(out.dim(), (2, 3));
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let other = ModelParams::init(&ModelSpec::mlp(4, &[5], 4, false), &mut rng).unwrap();
        let err = average_logits(&[model(1, &[5]), other], Array2::zeros((1, 4)).view()).unwrap_err();
        assert!(matches!(err, Error::IncompatibleEnsemble(_)));
    }
}
