use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::ClassDistribution;
use crate::engine::{run_leoshot, LeoShotConfig, LeoShotOutcome};
use crate::error::{Error, Result};
use crate::nn::{argmax_rows, average_logits, average_weights, train_classifier, ModelParams};
use crate::orbit::SatId;
use crate::sim::fedavg::{compute_time, local_seed, test_point};
use crate::sim::metrics::{fmt, Event, EventKind, RunMetrics, TrajectoryPoint};
use crate::sim::scenario::{intra_orbit_relay_time, Contact};
use crate::sim::{evaluate_model, Scenario};
use crate::link::PayloadSpec;

#[derive(Debug, Clone)]
pub struct OneShotRun {
    pub metrics: RunMetrics,
    pub outcome: LeoShotOutcome,
    /// Partial model uploaded by each orbit's sink.
    pub orbit_models: Vec<ModelParams>,
    pub orbit_distributions: Vec<ClassDistribution>,
    /// Accuracy of the argmax of the orbit models' averaged logits.
    pub logit_ensemble_accuracy: f64,
    /// Accuracy of the data-weighted average of the orbit models' weights.
    pub weight_average_accuracy: f64,
}

/// Earliest feasible contact among the satellites of `orbit`, lower slot on ties.
fn orbit_contact(scenario: &Scenario, orbit: usize, ready: f64, payload: &PayloadSpec) -> Result<(SatId, Contact)> {
    let mut best: Option<(SatId, Contact)> = None;
    for slot in 0..scenario.constellation.sats_per_orbit {
        let sat = SatId::new(orbit, slot);
        if let Some(c) = scenario.next_contact(sat, ready, payload)? {
            if best.is_none_or(|(_, b)| c.start < b.start) {
                best = Some((sat, c));
            }
        }
    }
    best.ok_or_else(|| Error::Infeasible(format!("orbit {orbit} has no usable window after t = {ready} s")))
}

fn transfer_event(kind: EventKind, party: String, c: &Contact, bits: f64, note: &str) -> Event {
    Event {
        time: c.start,
        duration: c.duration,
        kind,
        party,
        bits,
        distance: c.distance,
        note: note.into(),
    }
}

/// One-shot exchange: (optional common-model broadcast) → local training → relay to each
/// orbit's sink → one upload per orbit → server generation, distillation and retraining.
pub fn run_oneshot(scenario: &Scenario, cfg: &LeoShotConfig, seed: u64) -> Result<OneShotRun> {
    let mut metrics = RunMetrics::new("leoshot");
    let spec = &scenario.constellation;
    let payload = scenario.model_payload();
    let orbit_count = spec.orbit_count();

    // Starting model and arrival time of every satellite, orbit-major.
    let mut starts: Vec<(SatId, ModelParams, f64)> = Vec::with_capacity(spec.satellite_count());
    if scenario.broadcast_initial {
        let w0 = ModelParams::init(&scenario.client_spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
        for o in 0..orbit_count {
            let (first, c) = orbit_contact(scenario, o, 0.0, &payload)?;
            metrics
                .events
                .push(transfer_event(EventKind::Broadcast, first.to_string(), &c, payload.bits(), "initial"));
            let relay = intra_orbit_relay_time(spec, first, &payload, scenario.isl_rate)?;
            metrics.events.push(Event {
                time: c.end(),
                duration: relay,
                kind: EventKind::Relay,
                party: format!("orbit-{o}"),
                bits: payload.bits(),
                distance: 0.0,
                note: "initial".into(),
            });
            for slot in 0..spec.sats_per_orbit {
                starts.push((SatId::new(o, slot), w0.clone(), c.end() + relay));
            }
        }
    } else {
        // Without a broadcast, satellites of an orbit share an initialization seed.
        for o in 0..orbit_count {
            let init = ModelParams::init(
                &scenario.client_spec,
                &mut ChaCha8Rng::seed_from_u64(seed ^ (0x0b17 + o as u64)),
            )?;
            for slot in 0..spec.sats_per_orbit {
                starts.push((SatId::new(o, slot), init.clone(), 0.0));
            }
        }
    }

    let trained: Vec<(SatId, ModelParams, f64, f64)> = starts
        .into_par_iter()
        .map(|(sat, mut model, t_recv)| {
            let shard = scenario.shard(sat)?;
            let mut rng = ChaCha8Rng::seed_from_u64(local_seed(seed, 1, sat));
            train_classifier(&mut model, shard.features.view(), &shard.labels, &scenario.local, &mut rng)?;
            let busy = compute_time(scenario.local_compute_s, shard.len(), scenario.local.epochs);
            Ok((sat, model, t_recv, busy))
        })
        .collect::<Result<_>>()?;

    let mut orbit_models = Vec::with_capacity(orbit_count);
    let mut orbit_distributions = Vec::with_capacity(orbit_count);
    let mut t_server: f64 = 0.0;
    for o in 0..orbit_count {
        let members: Vec<&(SatId, ModelParams, f64, f64)> = trained.iter().filter(|t| t.0.orbit == o).collect();
        let mut ready: f64 = 0.0;
        for (sat, _, t_recv, busy) in &members {
            metrics.events.push(Event {
                time: *t_recv,
                duration: *busy,
                kind: EventKind::LocalTraining,
                party: sat.to_string(),
                bits: 0.0,
                distance: 0.0,
                note: String::new(),
            });
            ready = ready.max(t_recv + busy);
        }
        // Ring symmetry: the relay time does not depend on which satellite is the sink.
        let relay = intra_orbit_relay_time(spec, SatId::new(o, 0), &payload, scenario.isl_rate)?;
        metrics.events.push(Event {
            time: ready,
            duration: relay,
            kind: EventKind::Relay,
            party: format!("orbit-{o}"),
            bits: payload.bits(),
            distance: 0.0,
            note: "to sink".into(),
        });
        let (sink, c) = orbit_contact(scenario, o, ready + relay, &payload)?;
        metrics
            .events
            .push(transfer_event(EventKind::Upload, sink.to_string(), &c, payload.bits(), "partial model"));
        t_server = t_server.max(c.end());

        let weighted: Vec<(ModelParams, f64)> = members
            .iter()
            .map(|(sat, m, _, _)| Ok((m.clone(), scenario.partition.shard(*sat)?.len() as f64)))
            .collect::<Result<_>>()?;
        orbit_models.push(average_weights(&weighted)?);
        orbit_distributions.push(scenario.partition.orbit_distribution(&scenario.train, o)?);
    }

    let outcome = run_leoshot(&orbit_models, &orbit_distributions, cfg, seed ^ 0x5e4e7, Some(&scenario.test))?;
    let mut t = t_server;
    for p in &outcome.phases {
        let busy = compute_time(scenario.server_compute_s, p.sample_epochs, 1);
        metrics.events.push(Event {
            time: t,
            duration: busy,
            kind: EventKind::ServerPhase,
            party: "server".into(),
            bits: 0.0,
            distance: 0.0,
            note: p.phase.name().into(),
        });
        metrics.phases.push((t, p.clone()));
        t += busy;
    }

    let (acc, loss) = test_point(&outcome.server, scenario)?;
    metrics.trajectory.push(TrajectoryPoint {
        time: t,
        round: 1,
        accuracy: acc,
        loss,
    });
    metrics.convergence_time = t;
    metrics.final_accuracy = acc;
    metrics.rounds = 1;

    let ens = average_logits(&orbit_models, scenario.test.features.view())?;
    let hits = argmax_rows(&ens).iter().zip(&scenario.test.labels).filter(|(p, l)| p == l).count();
    let logit_ensemble_accuracy = hits as f64 / scenario.test.len() as f64;
    let sizes: Vec<f64> = (0..orbit_count)
        .map(|o| scenario.partition.orbit_indices(o).len() as f64)
        .collect();
    let averaged = average_weights(
        &orbit_models.iter().cloned().zip(sizes).collect::<Vec<_>>(),
    )?;
    let weight_average_accuracy = evaluate_model(&averaged, &scenario.test)?;

    metrics.sort_events();
    metrics.summary_extra = vec![
        ("distilled_accuracy".into(), outcome.phases[1].accuracy.map_or(String::new(), fmt)),
        ("logit_ensemble_accuracy".into(), fmt(logit_ensemble_accuracy)),
        ("weight_average_accuracy".into(), fmt(weight_average_accuracy)),
        ("server_upload_complete_s".into(), fmt(t_server)),
        ("retrain_rounds".into(), outcome.retrain.rounds.to_string()),
        ("resample_warnings".into(), outcome.retrain.resample_warnings.to_string()),
    ];
    Ok(OneShotRun {
        metrics,
        outcome,
        orbit_models,
        orbit_distributions,
        logit_ensemble_accuracy,
        weight_average_accuracy,
    })
}
