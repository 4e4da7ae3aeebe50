use std::fs;
use std::path::Path;

use crate::engine::PhaseMetrics;
use crate::error::{Error, Result};

/// Simulated time, seconds since the scenario epoch. Never moves backwards.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimClock {
    now: f64,
}

impl SimClock {
    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.now {
            return Err(Error::arg(format!("clock cannot move back from {} to {t}", self.now)));
        }
        self.now = t;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Broadcast,
    Relay,
    LocalTraining,
    Upload,
    Aggregate,
    ServerPhase,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Broadcast => "broadcast",
            EventKind::Relay => "relay",
            EventKind::LocalTraining => "local_training",
            EventKind::Upload => "upload",
            EventKind::Aggregate => "aggregate",
            EventKind::ServerPhase => "server_phase",
        }
    }

    pub fn is_transfer(self) -> bool {
        matches!(self, EventKind::Broadcast | EventKind::Upload)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub duration: f64,
    pub kind: EventKind,
    /// Satellite, orbit, or `server`.
    pub party: String,
    /// Payload bits; zero for non-transfer events.
    pub bits: f64,
    /// Link distance at event start, meters; zero when not applicable.
    pub distance: f64,
    /// Round number (FedAvg) or phase name (one-shot).
    pub note: String,
}

impl Event {
    pub fn end(&self) -> f64 {
        self.time + self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub round: usize,
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub protocol: String,
    pub events: Vec<Event>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub convergence_time: f64,
    pub final_accuracy: f64,
    pub rounds: usize,
    /// Extra summary columns, in order.
    pub summary_extra: Vec<(String, String)>,
    /// Server phases with their simulated start times (one-shot only).
    pub phases: Vec<(f64, PhaseMetrics)>,
}

impl RunMetrics {
    pub fn new(protocol: &str) -> Self {
        Self {
            protocol: protocol.to_string(),
            ..Default::default()
        }
    }

    /// Orders events by start time, then party, then kind.
    pub fn sort_events(&mut self) {
        self.events.sort_by(|a, b| {
            a.time
                .total_cmp(&b.time)
                .then_with(|| a.party.cmp(&b.party))
                .then_with(|| a.kind.cmp(&b.kind))
        });
    }

    /// Earliest trajectory time with accuracy at least `target`.
    pub fn time_to_accuracy(&self, target: f64) -> Option<f64> {
        self.trajectory.iter().find(|p| p.accuracy >= target).map(|p| p.time)
    }

    pub fn write_events_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["start_s", "duration_s", "end_s", "kind", "party", "bits", "distance_m", "note"])?;
        for e in &self.events {
            w.write_record([
                fmt(e.time),
                fmt(e.duration),
                fmt(e.end()),
                e.kind.name().to_string(),
                e.party.clone(),
                fmt(e.bits),
                fmt(e.distance),
                e.note.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_trajectory_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time_s", "round", "accuracy", "loss"])?;
        for p in &self.trajectory {
            w.write_record([fmt(p.time), p.round.to_string(), fmt(p.accuracy), fmt(p.loss)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_columns(&self) -> Vec<(String, String)> {
        let mut cols = vec![
            ("protocol".to_string(), self.protocol.clone()),
            ("convergence_time_s".to_string(), fmt(self.convergence_time)),
            ("final_accuracy".to_string(), fmt(self.final_accuracy)),
            ("rounds".to_string(), self.rounds.to_string()),
        ];
        cols.extend(self.summary_extra.iter().cloned());
        cols
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let cols = self.summary_columns();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(cols.iter().map(|(k, _)| k))?;
        w.write_record(cols.iter().map(|(_, v)| v))?;
        w.flush()?;
        Ok(())
    }

    pub fn write_phases_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["phase", "start_s", "epochs_or_rounds", "first_loss", "final_loss", "accuracy", "sample_epochs"])?;
        for (start, p) in &self.phases {
            w.write_record([
                p.phase.name().to_string(),
                fmt(*start),
                p.losses.len().to_string(),
                p.losses.first().map_or(String::new(), |v| fmt(*v)),
                p.losses.last().map_or(String::new(), |v| fmt(*v)),
                p.accuracy.map_or(String::new(), fmt),
                p.sample_epochs.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// events.csv, trajectory.csv, summary.csv, and phases.csv when there are phases.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_events_csv(&dir.join("events.csv"))?;
        self.write_trajectory_csv(&dir.join("trajectory.csv"))?;
        self.write_summary_csv(&dir.join("summary.csv"))?;
        if !self.phases.is_empty() {
            self.write_phases_csv(&dir.join("phases.csv"))?;
        }
        Ok(())
    }
}

/// Shortest round-trip float text; stable across runs.
pub(crate) fn fmt(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clock_is_monotone() {
        let mut c = SimClock::default();
        c.advance_to(5.0).unwrap();
        c.advance_to(5.0).unwrap();
        assert!(c.advance_to(4.0).is_err());
        assert_eq!(c.now(), 5.0);
    }

    #[test]
    fn time_to_accuracy_takes_first_hit() {
        let mut m = RunMetrics::new("x");
        for (i, a) in [0.2, 0.6, 0.5, 0.9].into_iter().enumerate() {
            m.trajectory.push(TrajectoryPoint {
                time: i as f64 * 10.0,
                round: i,
                accuracy: a,
                loss: 0.0,
            });
        }
        assert_eq!(m.time_to_accuracy(0.55), Some(10.0));
        assert_eq!(m.time_to_accuracy(0.95), None);
    }
}
