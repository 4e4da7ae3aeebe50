use std::f64::consts::PI;

use crate::data::{Dataset, PartitionPlan};
use crate::error::{Error, Result};
use crate::link::{transfer_time, LinkParams, PayloadSpec};
use crate::nn::{accuracy, ModelParams, ModelSpec, SgdConfig};
use crate::orbit::{slant_range, ConstellationSpec, GroundStation, SatId, VisibilityWindow};

/// Everything a protocol run needs: geometry, links, data and local training settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub constellation: ConstellationSpec,
    pub ground_station: GroundStation,
    pub link: LinkParams,
    /// Inter-satellite link rate, bits/s.
    pub isl_rate: f64,
    pub horizon: f64,
    /// Visibility windows over `[0, horizon]`, sorted by start.
    pub windows: Vec<VisibilityWindow>,
    pub client_spec: ModelSpec,
    pub local: SgdConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub partition: PartitionPlan,
    /// Simulated seconds per epoch over 1000 samples on a satellite.
    pub local_compute_s: f64,
    /// Same, on the server.
    pub server_compute_s: f64,
    /// Whether the one-shot run starts from a broadcast common model.
    pub broadcast_initial: bool,
}

/// A transfer scheduled inside a visibility window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub start: f64,
    pub duration: f64,
    pub distance: f64,
    pub window: VisibilityWindow,
}

impl Contact {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

impl Scenario {
    pub fn model_payload(&self) -> PayloadSpec {
        PayloadSpec::model(self.client_spec.param_count())
    }

    pub fn shard(&self, sat: SatId) -> Result<Dataset> {
        self.train.subset(self.partition.shard(sat)?)
    }

    /// First transfer of `payload` between `sat` and the ground station that starts no earlier
    /// than `ready` and finishes inside one visibility window. The duration uses the range at
    /// transfer start. `None` when no such window exists before the horizon.
    pub fn next_contact(&self, sat: SatId, ready: f64, payload: &PayloadSpec) -> Result<Option<Contact>> {
        for w in self.windows.iter().filter(|w| w.sat == sat && w.end >= ready) {
            let start = w.start.max(ready);
            let distance = slant_range(&self.constellation, &self.ground_station, sat, start)?;
            let duration = transfer_time(payload, &self.link, distance)?;
            if start + duration <= w.end {
                return Ok(Some(Contact {
                    start,
                    duration,
                    distance,
                    window: *w,
                }));
            }
        }
        Ok(None)
    }
}

/// Per-orbit uplink satellite and the window it will use.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkAssignment {
    pub sinks: Vec<(SatId, VisibilityWindow)>,
}

/// For every orbit, the satellite whose next window (still open at `clock`) starts first;
/// ties go to the lower slot.
pub fn select_sinks(windows: &[VisibilityWindow], clock: f64, orbit_count: usize) -> Result<SinkAssignment> {
    let sinks = (0..orbit_count)
        .map(|o| {
            windows
                .iter()
                .filter(|w| w.sat.orbit == o && w.end >= clock)
                .min_by(|a, b| {
                    a.start
                        .max(clock)
                        .total_cmp(&b.start.max(clock))
                        .then(a.sat.slot.cmp(&b.sat.slot))
                })
                .map(|w| (w.sat, *w))
                .ok_or_else(|| Error::Infeasible(format!("orbit {o} has no visibility window after t = {clock} s")))
        })
        .collect::<Result<_>>()?;
    Ok(SinkAssignment { sinks })
}

/// Ring distance between adjacent satellites of an orbit, 2r·sin(π/S).
pub fn isl_chord(spec: &ConstellationSpec, orbit: usize) -> f64 {
    let s = spec.sats_per_orbit as f64;
    2.0 * spec.orbit_radius(orbit) * (PI / s).sin()
}

/// Time for every model of an orbit to reach `sink` hop by hop along the shorter ring
/// direction: the farthest satellite's hop count times one hop's propagation and transmission.
pub fn intra_orbit_relay_time(
    spec: &ConstellationSpec,
    sink: SatId,
    payload: &PayloadSpec,
    isl_rate: f64,
) -> Result<f64> {
    spec.plane(sink)?;
    let s = spec.sats_per_orbit;
    if s <= 1 {
        return Ok(0.0);
    }
    if !(isl_rate > 0.0) {
        return Err(Error::arg("inter-satellite link rate must be positive"));
    }
    let hops = (0..s)
        .map(|slot| {
            let d = slot.abs_diff(sink.slot);
            d.min(s - d)
        })
        .max()
        .unwrap_or(0);
    let hop = isl_chord(spec, sink.orbit) / spec.consts.speed_of_light + payload.bits() / isl_rate;
    Ok(hops as f64 * hop)
}

/// Eval-mode accuracy on `test`.
pub fn evaluate_model(model: &ModelParams, test: &Dataset) -> Result<f64> {
    accuracy(model, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(orbit: usize, slot: usize, start: f64) -> VisibilityWindow {
        VisibilityWindow {
            sat: SatId::new(orbit, slot),
            start,
            end: start + 300.0,
        }
    }

    #[test]
    fn earliest_window_wins() {
        let ws = vec![window(0, 0, 100.0), window(0, 1, 50.0)];
        let s = select_sinks(&ws, 0.0, 1).unwrap();
        assert_eq!(s.sinks[0].0, SatId::new(0, 1));
        let ws = vec![window(0, 1, 50.0), window(0, 0, 50.0)];
        assert_eq!(select_sinks(&ws, 0.0, 1).unwrap().sinks[0].0, SatId::new(0, 0));
        assert!(matches!(select_sinks(&ws, 1000.0, 1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn relay_matches_ring_geometry() {
        let spec = ConstellationSpec::walker_delta(5, 8, 500e3, 80f64.to_radians(), 2.0 * PI, None).unwrap();
        let payload = PayloadSpec::model(10_000);
        let t = intra_orbit_relay_time(&spec, SatId::new(2, 3), &payload, 16e6).unwrap();
        assert!((isl_chord(&spec, 2) - 5258835.727561064).abs() < 1e-6);
        assert!((t - 0.23016635125038487).abs() < 1e-12, "{t}");
        let t0 = intra_orbit_relay_time(&spec, SatId::new(2, 0), &payload, 16e6).unwrap();
        assert!((t - t0).abs() < 1e-15);
    }
}
