use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{average_weights, cross_entropy, train_classifier, ModelParams};
use crate::orbit::SatId;
use crate::sim::metrics::{fmt, Event, EventKind, RunMetrics, SimClock, TrajectoryPoint};
use crate::sim::{evaluate_model, Scenario};

/// Per-satellite seed for local training in a round.
pub(crate) fn local_seed(seed: u64, round: usize, sat: SatId) -> u64 {
    seed ^ ((round as u64) << 40) ^ ((sat.orbit as u64) << 20) ^ sat.slot as u64 ^ 0x10ca1
}

pub(crate) fn compute_time(per_kilo_epoch: f64, samples: usize, epochs: usize) -> f64 {
    per_kilo_epoch * epochs as f64 * samples as f64 / 1000.0
}

/// Test accuracy and cross-entropy of a model.
pub(crate) fn test_point(model: &ModelParams, scenario: &Scenario) -> Result<(f64, f64)> {
    let acc = evaluate_model(model, &scenario.test)?;
    let logits = model.predict(scenario.test.features.view())?;
    Ok((acc, cross_entropy(logits.view(), &scenario.test.labels)?))
}

/// Synchronous FedAvg over the visibility schedule. Each round the global model is sent to
/// every satellite in that satellite's next window, trained locally, uploaded in the next
/// window after training, and aggregated once every upload has arrived. Stops when test
/// accuracy reaches `target_accuracy`, after `rounds_max` rounds, or when some satellite has no
/// usable window left before the horizon.
pub fn run_fedavg(scenario: &Scenario, rounds_max: usize, target_accuracy: Option<f64>, seed: u64) -> Result<RunMetrics> {
    let mut metrics = RunMetrics::new("fedavg");
    let sats: Vec<SatId> = scenario.constellation.satellites().collect();
    let shards = sats
        .iter()
        .map(|&s| scenario.shard(s))
        .collect::<Result<Vec<_>>>()?;
    let payload = scenario.model_payload();
    let mut global = ModelParams::init(&scenario.client_spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut clock = SimClock::default();
    let mut stop_reason = "rounds_max";
    let mut target_reached = false;

    let (acc, loss) = test_point(&global, scenario)?;
    metrics.trajectory.push(TrajectoryPoint {
        time: 0.0,
        round: 0,
        accuracy: acc,
        loss,
    });
    metrics.final_accuracy = acc;

    let broadcast = |metrics: &mut RunMetrics, at: f64, round: usize| -> Result<Option<Vec<f64>>> {
        let mut arrivals = Vec::with_capacity(sats.len());
        for &sat in &sats {
            let Some(c) = scenario.next_contact(sat, at, &payload)? else {
                return Ok(None);
            };
            metrics.events.push(Event {
                time: c.start,
                duration: c.duration,
                kind: EventKind::Broadcast,
                party: sat.to_string(),
                bits: payload.bits(),
                distance: c.distance,
                note: format!("round {round}"),
            });
            arrivals.push(c.end());
        }
        Ok(Some(arrivals))
    };

    let Some(mut received) = broadcast(&mut metrics, 0.0, 1)? else {
        return Err(Error::Infeasible(
            "some satellite never sees the ground station within the horizon".into(),
        ));
    };
    for round in 1..=rounds_max {
        let trained: Vec<ModelParams> = sats
            .par_iter()
            .zip(shards.par_iter())
            .map(|(&sat, shard)| {
                let mut local = global.clone();
                let mut rng = ChaCha8Rng::seed_from_u64(local_seed(seed, round, sat));
                train_classifier(&mut local, shard.features.view(), &shard.labels, &scenario.local, &mut rng)?;
                Ok(local)
            })
            .collect::<Result<_>>()?;

        let mut uploads = Vec::with_capacity(sats.len());
        let mut complete = true;
        for ((&sat, shard), &t_recv) in sats.iter().zip(&shards).zip(&received) {
            let busy = compute_time(scenario.local_compute_s, shard.len(), scenario.local.epochs);
            metrics.events.push(Event {
                time: t_recv,
                duration: busy,
                kind: EventKind::LocalTraining,
                party: sat.to_string(),
                bits: 0.0,
                distance: 0.0,
                note: format!("round {round}"),
            });
            match scenario.next_contact(sat, t_recv + busy, &payload)? {
                Some(c) => {
                    metrics.events.push(Event {
                        time: c.start,
                        duration: c.duration,
                        kind: EventKind::Upload,
                        party: sat.to_string(),
                        bits: payload.bits(),
                        distance: c.distance,
                        note: format!("round {round}"),
                    });
                    uploads.push(c.end());
                }
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            stop_reason = "horizon";
            break;
        }

        let t_agg = uploads.iter().copied().fold(0.0, f64::max);
        clock.advance_to(t_agg)?;
        let weighted: Vec<(ModelParams, f64)> = trained
            .into_iter()
            .zip(&shards)
            .map(|(m, s)| (m, s.len() as f64))
            .collect();
        global = average_weights(&weighted)?;
        metrics.events.push(Event {
            time: t_agg,
            duration: 0.0,
            kind: EventKind::Aggregate,
            party: "server".into(),
            bits: 0.0,
            distance: 0.0,
            note: format!("round {round}"),
        });
        let (acc, loss) = test_point(&global, scenario)?;
        metrics.trajectory.push(TrajectoryPoint {
            time: t_agg,
            round,
            accuracy: acc,
            loss,
        });
        metrics.rounds = round;
        metrics.convergence_time = t_agg;
        metrics.final_accuracy = acc;
        if target_accuracy.is_some_and(|t| acc >= t) {
            target_reached = true;
            stop_reason = "target";
            break;
        }
        if round == rounds_max {
            break;
        }
        match broadcast(&mut metrics, t_agg, round + 1)? {
            Some(r) => received = r,
            None => {
                stop_reason = "horizon";
                break;
            }
        }
    }
    metrics.sort_events();
    metrics.summary_extra = vec![
        ("target_accuracy".into(), target_accuracy.map_or(String::new(), fmt)),
        ("target_reached".into(), target_reached.to_string()),
        ("stop_reason".into(), stop_reason.into()),
    ];
    Ok(metrics)
}
