//! Generator objective: cross-entropy of the ensemble on the conditioning labels, batch-norm
//! statistic matching at the teachers, and a teacher/student agreement term.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::loss::{cross_entropy, cross_entropy_grad, kl_rows, softmax, softmax_backward, LOG_FLOOR};
use crate::nn::{check_ensemble, BnStats, Forward, Mode, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub ce: f64,
    pub bn: f64,
    pub kl_gen: f64,
    pub total: f64,
}

impl LossComponents {
    fn combine(ce: f64, bn: f64, kl_gen: f64, gamma1: f64, gamma2: f64) -> Self {
        Self {
            ce,
            bn,
            kl_gen,
            total: ce + gamma1 * bn + gamma2 * kl_gen,
        }
    }
}

fn l2(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Unit vector along `v`, or zero at the origin (subgradient of the norm).
fn unit(v: &Array1<f64>) -> Array1<f64> {
    let n = l2(v);
    if n > 0.0 {
        v / n
    } else {
        Array1::zeros(v.len())
    }
}

/// `Σ_b ‖μ_b − μ̄_b‖ + ‖σ²_b − σ̄²_b‖` for one member, with the gradient on the measured stats.
fn bn_member_term(measured: &[BnStats], stored: &[BnStats]) -> (f64, Vec<BnStats>) {
    let mut value = 0.0;
    let grads = measured
        .iter()
        .zip(stored)
        .map(|(m, s)| {
            let dm = &m.mean - &s.mean;
            let dv = &m.var - &s.var;
            value += l2(&dm) + l2(&dv);
            BnStats {
                mean: unit(&dm),
                var: unit(&dv),
            }
        })
        .collect();
    (value, grads)
}

/// Mean over ensemble members of the distance between the batch statistics that `samples`
/// induce at each member's batch-norm layers and that member's running statistics.
/// Members without batch norm contribute zero.
pub fn bn_regularizer(samples: ArrayView2<f64>, ensemble: &[ModelParams]) -> Result<f64> {
    check_ensemble(ensemble)?;
    let mut total = 0.0;
    for member in ensemble {
        let fwd = member.forward(samples, Mode::Eval)?;
        total += bn_member_term(&fwd.bn_stats, &member.running_stats()).0;
    }
    Ok(total / ensemble.len() as f64)
}

/// `1 − JS(softmax(server), softmax(ensemble))` averaged over rows, natural log. Lies in
/// `[1 − ln 2, 1]` and equals 1 when the two agree.
pub fn kl_gen_regularizer(server_logits: ArrayView2<f64>, ensemble_logits: ArrayView2<f64>) -> Result<f64> {
    Ok(kl_gen_with_grads(server_logits, ensemble_logits)?.0)
}

/// Value plus gradients with respect to both logit sets.
fn kl_gen_with_grads(
    server_logits: ArrayView2<f64>,
    ensemble_logits: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    if server_logits.dim() != ensemble_logits.dim() {
        return Err(Error::arg(format!(
            "logit shapes differ: {:?} vs {:?}",
            server_logits.dim(),
            ensemble_logits.dim()
        )));
    }
    if server_logits.nrows() == 0 {
        return Err(Error::arg("empty logit batch"));
    }
    let n = server_logits.nrows() as f64;
    let p = softmax(server_logits);
    let e = softmax(ensemble_logits);
    let q = (&p + &e) * 0.5;
    let js_rows = (kl_rows(p.view(), q.view()) + kl_rows(e.view(), q.view())) * 0.5;
    let value = 1.0 - js_rows.mean().unwrap();

    // d JS / d P_c = ½ ln(P_c / Q_c); the loss is 1 − mean JS.
    let half_log_ratio = |a: &Array2<f64>| {
        let mut g = Array2::zeros(a.raw_dim());
        ndarray::Zip::from(&mut g).and(a).and(&q).for_each(|g, &a, &q| {
            *g = -0.5 * (a.max(LOG_FLOOR).ln() - q.max(LOG_FLOOR).ln()) / n;
        });
        g
    };
    let d_server = softmax_backward(p.view(), half_log_ratio(&p).view());
    let d_ensemble = softmax_backward(e.view(), half_log_ratio(&e).view());
    Ok((value, d_server, d_ensemble))
}

/// Loss and its gradient with respect to the synthetic samples.
pub(crate) struct ObjectiveEval {
    pub components: LossComponents,
    pub ensemble_logits: Array2<f64>,
    pub server_logits: Array2<f64>,
    pub d_samples: Array2<f64>,
}

pub(crate) fn evaluate_objective(
    samples: ArrayView2<f64>,
    labels: &[usize],
    ensemble: &[ModelParams],
    server: &ModelParams,
    gamma1: f64,
    gamma2: f64,
) -> Result<ObjectiveEval> {
    check_ensemble(ensemble)?;
    let class_count = ensemble[0].class_count();
    if server.class_count() != class_count {
        return Err(Error::IncompatibleEnsemble(format!(
            "server has {} classes, ensemble {class_count}",
            server.class_count()
        )));
    }
    let members = ensemble.len() as f64;
    let forwards: Vec<Forward> = ensemble
        .iter()
        .map(|m| m.forward(samples, Mode::Eval))
        .collect::<Result<_>>()?;
    let mut ensemble_logits = Array2::zeros((samples.nrows(), class_count));
    for f in &forwards {
        ensemble_logits += &f.logits;
    }
    ensemble_logits /= members;
    let server_fwd = server.forward(samples, Mode::Eval)?;

    let ce = cross_entropy(ensemble_logits.view(), labels)?;
    let (kl_gen, d_server_logits, d_ens_from_kl) =
        kl_gen_with_grads(server_fwd.logits.view(), ensemble_logits.view())?;
    let d_ensemble_logits = cross_entropy_grad(ensemble_logits.view(), labels)? + &(d_ens_from_kl * gamma2);
    let d_member_logits = &d_ensemble_logits / members;

    let mut bn = 0.0;
    let mut d_samples = Array2::zeros(samples.raw_dim());
    for (member, fwd) in ensemble.iter().zip(&forwards) {
        let (value, mut d_stats) = bn_member_term(&fwd.bn_stats, &member.running_stats());
        bn += value / members;
        for s in &mut d_stats {
            s.mean *= gamma1 / members;
            s.var *= gamma1 / members;
        }
        let (_, dx) = member.backward(fwd, d_member_logits.view(), Some(&d_stats))?;
        d_samples += &dx;
    }
    let (_, dx) = server.backward(&server_fwd, (d_server_logits * gamma2).view(), None)?;
    d_samples += &dx;

    Ok(ObjectiveEval {
        components: LossComponents::combine(ce, bn, kl_gen, gamma1, gamma2),
        ensemble_logits,
        server_logits: server_fwd.logits,
        d_samples,
    })
}

/// `ℛ_CE + γ1·ℛ_BN + γ2·ℛ_KL_Gen` on a batch of synthetic samples with their conditioning
/// labels. Teachers and server are evaluated with their stored statistics.
pub fn generator_loss(
    samples: ArrayView2<f64>,
    labels: &[usize],
    ensemble: &[ModelParams],
    server: &ModelParams,
    gamma1: f64,
    gamma2: f64,
) -> Result<LossComponents> {
    Ok(evaluate_objective(samples, labels, ensemble, server, gamma1, gamma2)?.components)
}

/// Gradient of the generator objective with respect to the samples. Exposed for
/// finite-difference checks.
pub fn generator_loss_input_grad(
    samples: ArrayView2<f64>,
    labels: &[usize],
    ensemble: &[ModelParams],
    server: &ModelParams,
    gamma1: f64,
    gamma2: f64,
) -> Result<Array2<f64>> {
    Ok(evaluate_objective(samples, labels, ensemble, server, gamma1, gamma2)?.d_samples)
}
