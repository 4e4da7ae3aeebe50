//! Subcommand bodies shared by the binary and the tests. Each writes its CSV artifacts under
//! `out_dir` and returns a short text table for the terminal.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::orbit::{orbital_period, write_windows_csv};
use crate::sim::{run_fedavg, run_oneshot, OneShotRun, RunMetrics};

fn table(rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        writeln!(out, "{k:<width$}  {v}").unwrap();
    }
    out
}

fn row(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

/// Visibility windows over the horizon → `windows.csv`.
pub fn cmd_visibility(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String> {
    fs::create_dir_all(out_dir)?;
    let windows = cfg.windows()?;
    write_windows_csv(&windows, BufWriter::new(File::create(out_dir.join("windows.csv"))?))?;
    let mut rows = vec![row("windows", windows.len())];
    for o in 0..cfg.constellation.orbits {
        let n = windows.iter().filter(|w| w.sat.orbit == o).count();
        let first = windows
            .iter()
            .filter(|w| w.sat.orbit == o)
            .map(|w| w.start)
            .fold(f64::INFINITY, f64::min);
        rows.push(row(&format!("orbit {o}"), format!("{n} windows, first at {first:.1} s")));
    }
    Ok(table(&rows))
}

fn fedavg_metrics(cfg: &ExperimentConfig, target: Option<f64>) -> Result<RunMetrics> {
    let seed = cfg.scenario.seed;
    let scenario = cfg.scenario(seed)?;
    run_fedavg(&scenario, cfg.training.fedavg_rounds_max, target, seed)
}

/// Synchronous FedAvg → `events.csv`, `trajectory.csv`, `summary.csv`.
pub fn cmd_fedavg(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String> {
    let metrics = fedavg_metrics(cfg, None)?;
    metrics.write_all(out_dir)?;
    Ok(table(&metrics.summary_columns()))
}

fn oneshot_run(cfg: &ExperimentConfig) -> Result<OneShotRun> {
    let seed = cfg.scenario.seed;
    let scenario = cfg.scenario(seed)?;
    let share = scenario.partition.orbit_indices(0).len();
    run_oneshot(&scenario, &cfg.leoshot_config(share), seed)
}

fn write_oneshot(run: &OneShotRun, out_dir: &Path) -> Result<()> {
    run.metrics.write_all(out_dir)?;
    let archive = run.outcome.archive.to_dataset(run.outcome.server.class_count())?;
    archive.write_csv(BufWriter::new(File::create(out_dir.join("synthetic.csv"))?))
}

/// One-shot protocol → `events.csv`, `trajectory.csv`, `summary.csv`, `phases.csv`,
/// `synthetic.csv`.
pub fn cmd_leoshot(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String> {
    let run = oneshot_run(cfg)?;
    write_oneshot(&run, out_dir)?;
    Ok(table(&run.metrics.summary_columns()))
}

/// Side-by-side result of [`cmd_compare`].
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub leoshot_accuracy: f64,
    pub leoshot_time_s: f64,
    pub fedavg_accuracy: f64,
    pub fedavg_rounds: usize,
    /// Whether FedAvg reached the one-shot accuracy.
    pub target_reached: bool,
    /// FedAvg time to the one-shot accuracy, or its last aggregation time when it never got
    /// there (then `speedup` is a lower bound).
    pub fedavg_time_s: f64,
    pub speedup: f64,
    pub orbital_period_s: f64,
}

impl Comparison {
    pub fn columns(&self) -> Vec<(String, String)> {
        use crate::sim::fmt_f64 as f;
        vec![
            row("leoshot_accuracy", f(self.leoshot_accuracy)),
            row("leoshot_convergence_time_s", f(self.leoshot_time_s)),
            row("fedavg_accuracy", f(self.fedavg_accuracy)),
            row("fedavg_rounds", self.fedavg_rounds),
            row("fedavg_target_reached", self.target_reached),
            row("fedavg_time_to_accuracy_s", f(self.fedavg_time_s)),
            row("speedup", f(self.speedup)),
            row("speedup_is_lower_bound", !self.target_reached),
            row("orbital_period_s", f(self.orbital_period_s)),
            row("leoshot_orbital_periods", f(self.leoshot_time_s / self.orbital_period_s)),
        ]
    }
}

/// Runs the one-shot protocol, then FedAvg on the same scenario until it matches the one-shot
/// accuracy. Writes `leoshot/`, `fedavg/` and `compare.csv`.
pub fn run_compare(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Comparison> {
    let oneshot = oneshot_run(cfg)?;
    write_oneshot(&oneshot, &out_dir.join("leoshot"))?;
    let target = oneshot.metrics.final_accuracy;
    let fedavg = fedavg_metrics(cfg, Some(target))?;
    fedavg.write_all(&out_dir.join("fedavg"))?;

    let reached = fedavg.time_to_accuracy(target);
    let fedavg_time = reached.unwrap_or(fedavg.convergence_time);
    let spec = cfg.constellation_spec()?;
    let cmp = Comparison {
        leoshot_accuracy: target,
        leoshot_time_s: oneshot.metrics.convergence_time,
        fedavg_accuracy: fedavg.final_accuracy,
        fedavg_rounds: fedavg.rounds,
        target_reached: reached.is_some(),
        fedavg_time_s: fedavg_time,
        speedup: fedavg_time / oneshot.metrics.convergence_time,
        orbital_period_s: orbital_period(spec.orbits[0].altitude, &spec.consts)?,
    };
    let cols = cmp.columns();
    let mut w = csv::Writer::from_path(out_dir.join("compare.csv"))?;
    w.write_record(cols.iter().map(|(k, _)| k))?;
    w.write_record(cols.iter().map(|(_, v)| v))?;
    w.flush()?;
    Ok(cmp)
}

pub fn cmd_compare(cfg: &ExperimentConfig, out_dir: &Path) -> Result<String> {
    Ok(table(&run_compare(cfg, out_dir)?.columns()))
}
