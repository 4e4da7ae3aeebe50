use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::gradcheck::{loss_and_gradients, Objective};
use crate::nn::{argmax_rows, sgd_step, Mode, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

/// Shuffled minibatch index lists covering `0..n`. A trailing singleton batch is merged into
/// the previous one since batch statistics of one sample are degenerate.
pub fn minibatches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    batches
}

/// Minibatch SGD on cross-entropy. Returns the mean training loss of every epoch.
pub fn train_classifier<R: Rng + ?Sized>(
    params: &mut ModelParams,
    features: ArrayView2<f64>,
    labels: &[usize],
    cfg: &SgdConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if features.nrows() != labels.len() {
        return Err(Error::arg("feature and label counts differ"));
    }
    if labels.is_empty() {
        return Err(Error::arg("cannot train on an empty dataset"));
    }
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut total = 0.0;
        for idx in minibatches(labels.len(), cfg.batch_size, rng) {
            let x = features.select(Axis(0), &idx);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, fwd, grads, _) =
                loss_and_gradients(params, x.view(), Mode::Train, &Objective::CrossEntropy(&y))?;
            sgd_step(params, &grads, cfg.learning_rate)?;
            params.absorb_bn_stats(&fwd.bn_stats)?;
            total += loss * idx.len() as f64;
        }
        history.push(total / labels.len() as f64);
    }
    Ok(history)
}

/// Fraction of rows whose eval-mode argmax equals the label.
pub fn accuracy(model: &ModelParams, ds: &Dataset) -> Result<f64> {
    if model.class_count() != ds.class_count {
        return Err(Error::arg(format!(
            "model predicts {} classes, dataset has {}",
            model.class_count(),
            ds.class_count
        )));
    }
    let pred = argmax_rows(&model.predict(ds.features.view())?);
    let hits = pred.iter().zip(&ds.labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / ds.len() as f64)
}
