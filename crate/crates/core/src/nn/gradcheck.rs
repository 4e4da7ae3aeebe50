//! Central finite-difference check of [`ModelParams::backward`].

use ndarray::{Array2, ArrayView2};

use crate::error::Result;
use crate::nn::{loss, Forward, Gradients, Mode, ModelParams};

/// Gradients with magnitude below this are compared in absolute terms.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

/// What the network output is scored against.
#[derive(Debug, Clone)]
pub enum Objective<'a> {
    CrossEntropy(&'a [usize]),
    /// KL(softmax(teacher) ‖ softmax(logits)).
    Distill(ArrayView2<'a, f64>),
}

impl Objective<'_> {
    pub fn value(&self, logits: ArrayView2<f64>) -> Result<f64> {
        match self {
            Objective::CrossEntropy(labels) => loss::cross_entropy(logits, labels),
            Objective::Distill(teacher) => loss::kl_divergence(*teacher, logits),
        }
    }

    pub fn grad(&self, logits: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Objective::CrossEntropy(labels) => loss::cross_entropy_grad(logits, labels),
            Objective::Distill(teacher) => loss::kl_divergence_grad_q(*teacher, logits),
        }
    }
}

/// Loss, forward trace, parameter gradients and input gradient in one call.
pub fn loss_and_gradients(
    params: &ModelParams,
    batch: ArrayView2<f64>,
    mode: Mode,
    objective: &Objective<'_>,
) -> Result<(f64, Forward, Gradients, Array2<f64>)> {
    let fwd = params.forward(batch, mode)?;
    let value = objective.value(fwd.logits.view())?;
    let d_logits = objective.grad(fwd.logits.view())?;
    let (grads, d_input) = params.backward(&fwd, d_logits.view(), None)?;
    Ok((value, fwd, grads, d_input))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// Compares analytic gradients of every trainable parameter and every input entry with
/// central differences of step `h`.
pub fn check_gradients(
    params: &ModelParams,
    batch: ArrayView2<f64>,
    mode: Mode,
    objective: &Objective<'_>,
    h: f64,
) -> Result<GradCheckReport> {
    let (_, _, grads, d_input) = loss_and_gradients(params, batch, mode, objective)?;
    let analytic = grads.flat();
    let base = params.trainable_flat();

    let mut probe = params.clone();
    let mut eval = |flat: &[f64]| -> Result<f64> {
        probe.set_trainable_flat(flat)?;
        objective.value(probe.forward(batch, mode)?.logits.view())
    };

    let mut worst: f64 = 0.0;
    let mut flat = base.clone();
    for i in 0..base.len() {
        flat[i] = base[i] + h;
        let up = eval(&flat)?;
        flat[i] = base[i] - h;
        let down = eval(&flat)?;
        flat[i] = base[i];
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * h)));
    }

    let mut x = batch.to_owned();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = x[[r, c]];
        x[[r, c]] = orig + h;
        let up = objective.value(params.forward(x.view(), mode)?.logits.view())?;
        x[[r, c]] = orig - h;
        let down = objective.value(params.forward(x.view(), mode)?.logits.view())?;
        x[[r, c]] = orig;
        worst = worst.max(relative_error(d_input[[r, c]], (up - down) / (2.0 * h)));
    }

    Ok(GradCheckReport {
        max_rel_error: worst,
        checked: base.len() + x.len(),
    })
}
