//! Acceptance criteria C1-C10. Each criterion prints one PASS/FAIL line; the test fails if
//! any criterion does. Run with `cargo test --release --test acceptance -- --nocapture`.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use leoshot::commands::run_compare;
use leoshot::data::{class_distribution, kmeans};
use leoshot::engine::{bn_regularizer, kl_gen_regularizer, run_leoshot};
use leoshot::link::{dbi_to_linear, dbm_to_watts, free_space_path_loss, linear_to_db, transfer_time, LinkParams, PayloadSpec};
use leoshot::nn::{
    accuracy, check_gradients, cross_entropy, kl_divergence, train_classifier, Mode, ModelParams, Objective, SgdConfig,
};
use leoshot::orbit::{orbital_period, orbital_velocity, PhysicalConstants};
use leoshot::sim::run_oneshot;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Verdict {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c1_orbital_constants() -> Verdict {
    let c = PhysicalConstants::default();
    let t = orbital_period(500e3, &c).unwrap();
    let v = orbital_velocity(500e3, &c).unwrap();
    verdict(
        "C1 orbital constants",
        rel(t, 5668.0) <= 1e-3 && rel(v, 7616.6) <= 1e-3,
        format!("period {t:.2} s, velocity {v:.2} m/s"),
    )
}

fn c2_link_math() -> Verdict {
    let fspl = linear_to_db(free_space_path_loss(1e6, 2.4e9, 299_792_458.0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let p_dbm = rng.random_range(0.0..60.0);
        let g_sat = rng.random_range(0.0..20.0);
        let g_gs = rng.random_range(0.0..40.0);
        let temperature = rng.random_range(50.0..1000.0);
        let bandwidth = rng.random_range(1e5..1e8);
        let frequency = rng.random_range(1e9..3e10);
        let fixed = (i % 2 == 1).then(|| rng.random_range(1e6..1e9));
        let t_m = rng.random_range(0.0..1.0);
        let t_s = rng.random_range(0.0..1.0);
        let distance = rng.random_range(4e5..3e6);
        let params = rng.random_range(1..5_000_000usize);
        let link = LinkParams {
            tx_power: dbm_to_watts(p_dbm),
            gain_sat: dbi_to_linear(g_sat),
            gain_gs: dbi_to_linear(g_gs),
            noise_temperature: temperature,
            bandwidth,
            carrier_frequency: frequency,
            fixed_rate: fixed,
            processing_delay_sat: t_m,
            processing_delay_gs: t_s,
            ..LinkParams::default()
        };
        let got = transfer_time(&PayloadSpec::model(params), &link, distance).unwrap();
        let want = common::transfer_time_by_hand(
            64.0 * params as f64,
            distance,
            p_dbm,
            g_sat,
            g_gs,
            temperature,
            bandwidth,
            frequency,
            fixed,
            t_m,
            t_s,
        );
        worst = worst.max(rel(got, want));
    }
    verdict(
        "C2 link math",
        (fspl - 160.05).abs() <= 0.01 && worst <= 1e-12,
        format!("FSPL {fspl:.4} dB, worst transfer-time relative error {worst:.2e} over 100 inputs"),
    )
}

fn c3_gradients() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst: f64 = 0.0;
    let nets = 20;
    for _ in 0..nets {
        let (model, batch) = common::random_bn_net(&mut rng);
        let k = model.class_count();
        let labels: Vec<usize> = (0..batch.nrows()).map(|_| rng.random_range(0..k)).collect();
        let teacher = common::random_matrix(batch.nrows(), k, &mut rng);
        for mode in [Mode::Train, Mode::Eval] {
            for obj in [Objective::CrossEntropy(&labels), Objective::Distill(teacher.view())] {
                worst = worst.max(check_gradients(&model, batch.view(), mode, &obj, 1e-5).unwrap().max_rel_error);
            }
        }
    }
    verdict(
        "C3 gradient suite",
        worst <= 1e-4,
        format!("max relative error {worst:.2e} over {nets} BN networks"),
    )
}

fn c4_loss_invariants() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut violations = Vec::new();
    let lower = 1.0 - LN_2;
    let batches = 1000;
    for b in 0..batches {
        let n = rng.random_range(1..17);
        let k = rng.random_range(2..11);
        let scale = rng.random_range(0.1..20.0);
        let p = common::random_matrix(n, k, &mut rng) * scale;
        let q = common::random_matrix(n, k, &mut rng) * scale;
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let ce = cross_entropy(p.view(), &labels).unwrap();
        let kl = kl_divergence(p.view(), q.view()).unwrap();
        let kl_self = kl_divergence(p.view(), p.view()).unwrap();
        let mut uniform_row = p.clone();
        uniform_row.row_mut(0).fill(0.0);
        let kl_diff = kl_divergence(p.view(), uniform_row.view()).unwrap();
        let gen = kl_gen_regularizer(p.view(), q.view()).unwrap();
        let (model, x) = common::random_bn_net(&mut rng);
        let bn = bn_regularizer(x.view(), &[model]).unwrap();
        if ce < 0.0 || kl < 0.0 || kl_self.abs() > 1e-9 || kl_diff <= 1e-9 {
            violations.push(format!("batch {b}: ce {ce}, kl {kl}, kl(p,p) {kl_self}, kl(p,p') {kl_diff}"));
        }
        if !(lower - 1e-12..=1.0 + 1e-12).contains(&gen) || bn < 0.0 {
            violations.push(format!("batch {b}: kl_gen {gen}, bn {bn}"));
        }
    }
    verdict(
        "C4 loss invariants",
        violations.is_empty(),
        match violations.first() {
            None => format!("{batches} batches, no violation"),
            Some(v) => format!("{} violations, first: {v}", violations.len()),
        },
    )
}

struct DeskRun {
    ensemble: f64,
    weight_average: f64,
    distilled: f64,
    retrained: f64,
}

fn desk_runs() -> Vec<DeskRun> {
    SEEDS
        .iter()
        .map(|&seed| {
            let cfg = common::desk(seed, &[]);
            let scenario = cfg.scenario(seed).unwrap();
            let share = scenario.partition.orbit_indices(0).len();
            let run = run_oneshot(&scenario, &cfg.leoshot_config(share), seed).unwrap();
            DeskRun {
                ensemble: run.logit_ensemble_accuracy,
                weight_average: run.weight_average_accuracy,
                distilled: run.outcome.phases[1].accuracy.unwrap(),
                retrained: run.metrics.final_accuracy,
            }
        })
        .collect()
}

fn c5_logits_vs_weights(runs: &[DeskRun]) -> Verdict {
    let gaps: Vec<f64> = runs.iter().map(|r| r.ensemble - r.weight_average).collect();
    let wins = gaps.iter().filter(|&&g| g >= 0.10).count();
    let pairs: Vec<String> = runs
        .iter()
        .map(|r| format!("{:.3}/{:.3}", r.ensemble, r.weight_average))
        .collect();
    verdict(
        "C5 logit vs weight averaging",
        wins >= 4,
        format!("gap >= 10 pts in {wins}/5 seeds (logits/weights: {})", pairs.join(", ")),
    )
}

fn c6_virtual_retraining(runs: &[DeskRun]) -> Verdict {
    let gains: Vec<f64> = runs.iter().map(|r| r.retrained - r.distilled).collect();
    let med = common::median(gains.clone());
    let shown: Vec<String> = gains.iter().map(|g| format!("{g:+.3}")).collect();
    verdict(
        "C6 virtual retraining gain",
        med >= 0.03,
        format!("median phase-3 minus phase-2 accuracy {med:+.3} ({})", shown.join(", ")),
    )
}

fn c7_speedup(out: &Path) -> Verdict {
    let cfg = common::desk(1, &[]);
    let cmp = run_compare(&cfg, out).unwrap();
    let periods = cmp.leoshot_time_s / cmp.orbital_period_s;
    verdict(
        "C7 one-shot speedup",
        cmp.speedup >= 10.0 && periods <= 2.0,
        format!(
            "speedup {:.2}x (need 10x, FedAvg {} rounds to {:.3}, reached {}), one-shot done at {:.0} s = {:.2} periods (need <= 2)",
            cmp.speedup, cmp.fedavg_rounds, cmp.leoshot_accuracy, cmp.target_reached, cmp.leoshot_time_s, periods
        ),
    )
}

fn c8_separable_end_to_end() -> Verdict {
    let finals: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| {
            let cfg = common::desk(seed, &["data.separation=6"]);
            let (train, test) = cfg.datasets(seed).unwrap();
            let spec = cfg.client_spec(train.feature_dim(), train.class_count);
            let mut teacher = ModelParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let sgd = SgdConfig {
                learning_rate: cfg.training.learning_rate,
                epochs: 50,
                batch_size: cfg.training.batch_size,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            train_classifier(&mut teacher, train.features.view(), &train.labels, &sgd, &mut rng).unwrap();
            let dist = class_distribution(&train.labels, train.class_count).unwrap();
            let out = run_leoshot(&[teacher], &[dist], &cfg.leoshot_config(train.len()), seed, Some(&test)).unwrap();
            accuracy(&out.server, &test).unwrap()
        })
        .collect();
    let med = common::median(finals.clone());
    let shown: Vec<String> = finals.iter().map(|f| format!("{f:.3}")).collect();
    verdict(
        "C8 separable end-to-end",
        med >= 0.9,
        format!("median test accuracy {med:.3} ({})", shown.join(", ")),
    )
}

fn csv_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c9_determinism(tmp: &Path) -> Verdict {
    let quick = [
        "training.local_epochs=20",
        "data.train_per_class=40",
        "training.synthetic_samples=400",
        "training.generator_epochs=5",
        "training.distill_epochs=5",
        "training.fedavg_rounds_max=2",
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for sub in ["visibility", "fedavg", "leoshot", "compare"] {
        let mut trees = Vec::new();
        for run in 0..2 {
            let dir = tmp.join(format!("{sub}-{run}"));
            let mut cmd = Command::new(env!("CARGO_BIN_EXE_leoshot"));
            cmd.arg(sub)
                .arg("--config")
                .arg(common::configs_dir().join("desk.conf"))
                .arg("--out")
                .arg(&dir)
                .args(["--seed", "7"]);
            for s in quick {
                cmd.arg("--set").arg(s);
            }
            let status = cmd.output().unwrap().status;
            if !status.success() {
                mismatches.push(format!("{sub} exited with {status}"));
            }
            trees.push(csv_bytes(&dir));
        }
        files += trees[0].len();
        if trees[0].is_empty() || trees[0] != trees[1] {
            mismatches.push(sub.to_string());
        }
    }
    verdict(
        "C9 determinism",
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("4 subcommands, {files} CSV files byte-identical across two runs")
        } else {
            format!("differences in {}", mismatches.join(", "))
        },
    )
}

fn c10_kmeans_oracle() -> Verdict {
    let mut matches = 0;
    for seed in 0..20 {
        let pts = common::small_cloud(seed);
        let km = kmeans(pts.view(), 2, 100, seed).unwrap();
        let best = common::exhaustive_k2_inertia(&pts);
        if (km.inertia() - best).abs() <= 1e-9 * best.max(1.0) {
            matches += 1;
        }
    }
    verdict(
        "C10 k-means oracle",
        matches >= 18,
        format!("Lloyd inertia equals the exhaustive minimum in {matches}/20 instances"),
    )
}

#[test]
fn acceptance_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let mut verdicts = Vec::new();
    let mut timed = |f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let mut v = f();
        v.detail = format!("{} [{:.1} s]", v.detail, t.elapsed().as_secs_f64());
        verdicts.push(v);
    };
    timed(&mut c1_orbital_constants);
    timed(&mut c2_link_math);
    timed(&mut c3_gradients);
    timed(&mut c4_loss_invariants);
    let t = Instant::now();
    let runs = desk_runs();
    let desk_secs = t.elapsed().as_secs_f64();
    timed(&mut || {
        let mut v = c5_logits_vs_weights(&runs);
        v.detail = format!("{} [shared 5-seed runs {desk_secs:.1} s]", v.detail);
        v
    });
    timed(&mut || c6_virtual_retraining(&runs));
    timed(&mut || c7_speedup(&tmp.path().join("compare")));
    timed(&mut c8_separable_end_to_end);
    timed(&mut || c9_determinism(tmp.path()));
    timed(&mut c10_kmeans_oracle);

    for v in &verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.detail);
    }
    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
