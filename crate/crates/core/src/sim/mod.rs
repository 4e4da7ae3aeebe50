//! Discrete-event runs of synchronous FedAvg and the one-shot protocol over the visibility
//! schedule, with simulated-time accounting.

mod fedavg;
mod metrics;
mod oneshot;
mod scenario;

pub use fedavg::run_fedavg;
pub(crate) use metrics::fmt as fmt_f64;
pub use metrics::{Event, EventKind, RunMetrics, SimClock, TrajectoryPoint};
pub use oneshot::{run_oneshot, OneShotRun};
pub use scenario::{
    evaluate_model, intra_orbit_relay_time, isl_chord, select_sinks, Contact, Scenario, SinkAssignment,
};
