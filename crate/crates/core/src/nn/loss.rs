//! Softmax-based losses and their gradients with respect to logits. Every loss is a mean
//! over the rows of the batch.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

/// Floor applied to probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn check_labels(logits: ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.nrows() {
        return Err(Error::arg(format!(
            "{} labels for {} rows",
            labels.len(),
            logits.nrows()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= logits.ncols()) {
        return Err(Error::arg(format!(
            "label {bad} out of range for {} classes",
            logits.ncols()
        )));
    }
    Ok(())
}

/// Mean of −log softmax(logits)[label].
pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let logp = log_softmax(logits);
    let total: f64 = labels.iter().enumerate().map(|(i, &l)| -logp[[i, l]]).sum();
    Ok(total / labels.len() as f64)
}

/// (softmax − one-hot) / n
pub fn cross_entropy_grad(logits: ArrayView2<f64>, labels: &[usize]) -> Result<Array2<f64>> {
    check_labels(logits, labels)?;
    let n = labels.len() as f64;
    let mut g = softmax(logits);
    for (i, &l) in labels.iter().enumerate() {
        g[[i, l]] -= 1.0;
    }
    g /= n;
    Ok(g)
}

fn check_same_shape(p: ArrayView2<f64>, q: ArrayView2<f64>) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::arg(format!(
            "logit shapes differ: {:?} vs {:?}",
            p.dim(),
            q.dim()
        )));
    }
    if p.nrows() == 0 {
        return Err(Error::arg("empty logit batch"));
    }
    Ok(())
}

/// Per-row KL(P‖Q) between probability rows, with the log floor.
pub fn kl_rows(p: ArrayView2<f64>, q: ArrayView2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(p.nrows());
    Zip::from(&mut out)
        .and(p.rows())
        .and(q.rows())
        .for_each(|o, pr, qr| {
            *o = pr
                .iter()
                .zip(qr.iter())
                .map(|(&a, &b)| a * (a.max(LOG_FLOOR).ln() - b.max(LOG_FLOOR).ln()))
                .sum();
        });
    out
}

/// Mean over the batch of KL(softmax(p) ‖ softmax(q)).
pub fn kl_divergence(p_logits: ArrayView2<f64>, q_logits: ArrayView2<f64>) -> Result<f64> {
    check_same_shape(p_logits, q_logits)?;
    let p = softmax(p_logits);
    let q = softmax(q_logits);
    Ok(kl_rows(p.view(), q.view()).mean().unwrap())
}

/// Gradient of [`kl_divergence`] with respect to the second (student) logits: (q − p)/n.
pub fn kl_divergence_grad_q(p_logits: ArrayView2<f64>, q_logits: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_same_shape(p_logits, q_logits)?;
    let n = p_logits.nrows() as f64;
    Ok((softmax(q_logits) - softmax(p_logits)) / n)
}

/// Backpropagates a gradient with respect to softmax probabilities onto the logits.
pub fn softmax_backward(probs: ArrayView2<f64>, d_probs: ArrayView2<f64>) -> Array2<f64> {
    let inner = (&probs * &d_probs).sum_axis(Axis(1)).insert_axis(Axis(1));
    &probs * &(&d_probs - &inner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = Array2::<f64>::zeros((4, 7));
        let ce = cross_entropy(logits.view(), &[0, 3, 6, 2]).unwrap();
        assert!((ce - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn peaked_logits_drive_loss_to_zero() {
        let logits = array![[1000.0, 0.0, 0.0]];
        assert!(cross_entropy(logits.view(), &[0]).unwrap() < 1e-12);
    }

    #[test]
    fn cross_entropy_is_shift_invariant() {
        let a = array![[0.3, -1.2, 2.0], [1.0, 1.0, -4.0]];
        let b = &a + 17.5;
        let la = cross_entropy(a.view(), &[2, 0]).unwrap();
        let lb = cross_entropy(b.view(), &[2, 0]).unwrap();
        assert!((la - lb).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let logits = Array2::<f64>::zeros((1, 3));
        assert!(cross_entropy(logits.view(), &[3]).is_err());
        assert!(cross_entropy_grad(logits.view(), &[0, 1]).is_err());
    }

    #[test]
    fn ce_gradient_is_softmax_minus_one_hot() {
        let logits = array![[1.0, 2.0, 0.5]];
        let g = cross_entropy_grad(logits.view(), &[1]).unwrap();
        let p = softmax(logits.view());
        for c in 0..3 {
            let want = p[[0, c]] - if c == 1 { 1.0 } else { 0.0 };
            assert!((g[[0, c]] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn kl_hand_case() {
        // p = (1/2, 1/2), q = (3/4, 1/4): brute-force sum ½ln(2/3) + ½ln 2 = ½ ln(4/3).
        let p = array![[0.0, 0.0]];
        let q = array![[3f64.ln(), 0.0]];
        let kl = kl_divergence(p.view(), q.view()).unwrap();
        let brute: f64 = [(0.5, 0.75), (0.5, 0.25)]
            .iter()
            .map(|(a, b): &(f64, f64)| a * (a / b).ln())
            .sum();
        assert!((kl - brute).abs() < 1e-15);
        assert!((kl - 0.14384103622589042).abs() < 1e-15);
    }

    #[test]
    fn kl_of_identical_batches_is_zero() {
        let p = array![[0.1, 5.0, -3.0], [2.0, 2.0, 2.0]];
        assert!(kl_divergence(p.view(), p.view()).unwrap().abs() < 1e-15);
        assert!(kl_divergence(p.view(), Array2::zeros((1, 3)).view()).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(array![[800.0, -800.0, 0.0], [1e-3, 2e-3, 3e-3]].view());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
