//! Circular two-body orbits, a rotating ground station, and line-of-sight visibility windows.
//!
//! Everything here is a pure function of its inputs. Positions live in an Earth-centered
//! inertial frame whose x axis coincides with the Greenwich meridian at `t = 0`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;

use crate::error::{Error, Result};

/// Length of the sidereal day in seconds.
pub const SIDEREAL_DAY_S: f64 = 86_164.0;

/// Earth's rotation rate in rad/s.
pub const EARTH_ROTATION_RATE: f64 = TAU / SIDEREAL_DAY_S;

/// Width of the bisection bracket when refining window endpoints, in seconds.
pub const EDGE_RESOLUTION_S: f64 = 1.0;

/// Slack on the elevation inequality so a satellite placed exactly on the mask is visible.
const BOUNDARY_TOLERANCE_RAD: f64 = 1e-12;

pub type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// m³·kg⁻¹·s⁻²
    pub gravitational_constant: f64,
    /// kg
    pub earth_mass: f64,
    /// m
    pub earth_radius: f64,
    /// m/s
    pub speed_of_light: f64,
    /// J/K
    pub boltzmann: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gravitational_constant: 6.674_30e-11,
            earth_mass: 5.9722e24,
            earth_radius: 6_371_000.0,
            speed_of_light: 299_792_458.0,
            boltzmann: 1.380_649e-23,
        }
    }
}

impl PhysicalConstants {
    /// Standard gravitational parameter G·M_E.
    pub fn gm(&self) -> f64 {
        self.gravitational_constant * self.earth_mass
    }
}

/// Orbital speed on a circular orbit at altitude `altitude` (meters).
pub fn orbital_velocity(altitude: f64, consts: &PhysicalConstants) -> Result<f64> {
    check_altitude(altitude)?;
    Ok((consts.gm() / (consts.earth_radius + altitude)).sqrt())
}

/// Orbital period in seconds on a circular orbit at altitude `altitude` (meters).
pub fn orbital_period(altitude: f64, consts: &PhysicalConstants) -> Result<f64> {
    check_altitude(altitude)?;
    Ok(TAU * (consts.earth_radius + altitude).powf(1.5) / consts.gm().sqrt())
}

fn check_altitude(altitude: f64) -> Result<()> {
    if altitude > 0.0 && altitude.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("altitude must be positive, got {altitude}")))
    }
}

/// One orbital plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitPlane {
    /// meters above the Earth's surface
    pub altitude: f64,
    /// radians
    pub inclination: f64,
    /// right ascension of the ascending node, radians
    pub raan: f64,
    /// argument of latitude of slot 0 at `t = 0`, radians
    pub phase_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationSpec {
    pub sats_per_orbit: usize,
    pub orbits: Vec<OrbitPlane>,
    pub consts: PhysicalConstants,
}

/// (orbit index, slot index)
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SatId {
    pub orbit: usize,
    pub slot: usize,
}

impl SatId {
    pub fn new(orbit: usize, slot: usize) -> Self {
        Self { orbit, slot }
    }
}

impl std::fmt::Display for SatId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sat-{}-{}", self.orbit, self.slot)
    }
}

impl ConstellationSpec {
    /// Walker-delta layout: planes spread uniformly over `raan_spread` and slot 0 of plane `o`
    /// shifted by `o * phase_step` along the orbit.
    ///
    /// With `phase_step = None` the step is `π / (orbits · sats_per_orbit)`.
    pub fn walker_delta(
        orbit_count: usize,
        sats_per_orbit: usize,
        altitude: f64,
        inclination: f64,
        raan_spread: f64,
        phase_step: Option<f64>,
    ) -> Result<Self> {
        if orbit_count == 0 {
            return Err(Error::arg("constellation needs at least one orbit"));
        }
        let step = phase_step.unwrap_or(PI / (orbit_count * sats_per_orbit.max(1)) as f64);
        let spacing = raan_spread / orbit_count as f64;
        let orbits = (0..orbit_count)
            .map(|o| OrbitPlane {
                altitude,
                inclination,
                raan: o as f64 * spacing,
                phase_offset: o as f64 * step,
            })
            .collect();
        let spec = Self {
            sats_per_orbit,
            orbits,
            consts: PhysicalConstants::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.orbits.is_empty() {
            return Err(Error::arg("constellation needs at least one orbit"));
        }
        if self.sats_per_orbit == 0 {
            return Err(Error::arg("sats_per_orbit must be at least 1"));
        }
        for (o, plane) in self.orbits.iter().enumerate() {
            if !(plane.altitude > 0.0 && plane.altitude < 2_000_000.0) {
                return Err(Error::arg(format!(
                    "orbit {o}: altitude {} m outside the LEO range (0, 2000 km)",
                    plane.altitude
                )));
            }
            if !(0.0..=FRAC_PI_2).contains(&plane.inclination) {
                return Err(Error::arg(format!(
                    "orbit {o}: inclination {} rad outside [0, π/2]",
                    plane.inclination
                )));
            }
        }
        Ok(())
    }

    pub fn orbit_count(&self) -> usize {
        self.orbits.len()
    }

    pub fn satellite_count(&self) -> usize {
        self.orbits.len() * self.sats_per_orbit
    }

    /// All satellite ids, orbit-major.
    pub fn satellites(&self) -> impl Iterator<Item = SatId> + '_ {
        (0..self.orbits.len())
            .flat_map(move |o| (0..self.sats_per_orbit).map(move |s| SatId::new(o, s)))
    }

    pub fn plane(&self, sat: SatId) -> Result<&OrbitPlane> {
        if sat.slot >= self.sats_per_orbit {
            return Err(Error::UnknownSatellite {
                orbit: sat.orbit,
                slot: sat.slot,
            });
        }
        self.orbits.get(sat.orbit).ok_or(Error::UnknownSatellite {
            orbit: sat.orbit,
            slot: sat.slot,
        })
    }

    pub fn orbit_radius(&self, orbit: usize) -> f64 {
        self.consts.earth_radius + self.orbits[orbit].altitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteState {
    pub sat: SatId,
    pub position: Vec3,
    pub epoch: f64,
}

/// Position of `sat` at time `t` on its circular orbit.
pub fn propagate_satellite(spec: &ConstellationSpec, sat: SatId, t: f64) -> Result<SatelliteState> {
    let plane = spec.plane(sat)?;
    let radius = spec.consts.earth_radius + plane.altitude;
    let period = orbital_period(plane.altitude, &spec.consts)?;
    let u = plane.phase_offset + sat.slot as f64 * TAU / spec.sats_per_orbit as f64 + TAU / period * t;
    let (su, cu) = u.sin_cos();
    let (so, co) = plane.raan.sin_cos();
    let (si, ci) = plane.inclination.sin_cos();
    Ok(SatelliteState {
        sat,
        position: [
            radius * (co * cu - so * ci * su),
            radius * (so * cu + co * ci * su),
            radius * si * su,
        ],
        epoch: t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundStation {
    /// radians
    pub latitude: f64,
    /// radians, east positive
    pub longitude: f64,
    /// ϑ_min, radians
    pub min_elevation: f64,
}

impl GroundStation {
    pub fn new(latitude: f64, longitude: f64, min_elevation: f64) -> Result<Self> {
        if latitude.abs() > FRAC_PI_2 {
            return Err(Error::arg(format!("latitude {latitude} rad outside [-π/2, π/2]")));
        }
        if !(0.0..FRAC_PI_2).contains(&min_elevation) {
            return Err(Error::arg(format!(
                "minimum elevation {min_elevation} rad outside [0, π/2)"
            )));
        }
        Ok(Self {
            latitude,
            longitude,
            min_elevation,
        })
    }
}

/// Inertial position of the ground station at time `t`, on a sphere of radius `earth_radius`.
pub fn ground_station_position(gs: &GroundStation, t: f64, earth_radius: f64) -> Vec3 {
    let lon = gs.longitude + EARTH_ROTATION_RATE * t;
    let (slat, clat) = gs.latitude.sin_cos();
    let (slon, clon) = lon.sin_cos();
    [
        earth_radius * clat * clon,
        earth_radius * clat * slon,
        earth_radius * slat,
    ]
}

/// Angle between the local zenith at `gs_pos` and the line of sight towards `sat_pos`.
pub fn zenith_angle(sat_pos: Vec3, gs_pos: Vec3) -> Result<f64> {
    let los = sub(sat_pos, gs_pos);
    let (ng, nl) = (norm(gs_pos), norm(los));
    if ng == 0.0 || nl == 0.0 {
        return Err(Error::domain("zero-length ground-station or line-of-sight vector"));
    }
    Ok((dot(gs_pos, los) / (ng * nl)).clamp(-1.0, 1.0).acos())
}

/// Elevation of the satellite above the local horizon, radians.
pub fn elevation(sat_pos: Vec3, gs_pos: Vec3) -> Result<f64> {
    Ok(FRAC_PI_2 - zenith_angle(sat_pos, gs_pos)?)
}

/// Line-of-sight test: zenith angle ≤ π/2 − ϑ_min (closed).
pub fn is_visible(sat: &SatelliteState, gs_pos: Vec3, min_elevation: f64) -> Result<bool> {
    Ok(zenith_angle(sat.position, gs_pos)? <= FRAC_PI_2 - min_elevation + BOUNDARY_TOLERANCE_RAD)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityWindow {
    pub sat: SatId,
    pub start: f64,
    pub end: f64,
}

impl VisibilityWindow {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Satellite/GS visibility at one instant.
pub fn visible_at(spec: &ConstellationSpec, gs: &GroundStation, sat: SatId, t: f64) -> Result<bool> {
    let state = propagate_satellite(spec, sat, t)?;
    let g = ground_station_position(gs, t, spec.consts.earth_radius);
    is_visible(&state, g, gs.min_elevation)
}

/// Satellite–GS range at time `t`, meters.
pub fn slant_range(spec: &ConstellationSpec, gs: &GroundStation, sat: SatId, t: f64) -> Result<f64> {
    let state = propagate_satellite(spec, sat, t)?;
    Ok(distance(
        state.position,
        ground_station_position(gs, t, spec.consts.earth_radius),
    ))
}

/// Every maximal visibility interval in `[t_begin, t_end]`, sorted by start time.
///
/// Visibility is sampled every `step` seconds and each transition is bisected down to
/// [`EDGE_RESOLUTION_S`]. Endpoints are always on the visible side of the transition.
pub fn compute_visibility_windows(
    spec: &ConstellationSpec,
    gs: &GroundStation,
    t_begin: f64,
    t_end: f64,
    step: f64,
) -> Result<Vec<VisibilityWindow>> {
    if !(t_begin < t_end) {
        return Err(Error::arg(format!("empty horizon [{t_begin}, {t_end}]")));
    }
    if !(step > 0.0) {
        return Err(Error::arg(format!("sampling step must be positive, got {step}")));
    }
    if step > t_end - t_begin {
        return Err(Error::arg(format!(
            "sampling step {step} s exceeds the horizon length {} s",
            t_end - t_begin
        )));
    }

    let mut windows = Vec::new();
    for sat in spec.satellites() {
        windows.extend(windows_for_satellite(spec, gs, sat, t_begin, t_end, step)?);
    }
    windows.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then(a.sat.cmp(&b.sat))
    });
    Ok(windows)
}

fn windows_for_satellite(
    spec: &ConstellationSpec,
    gs: &GroundStation,
    sat: SatId,
    t_begin: f64,
    t_end: f64,
    step: f64,
) -> Result<Vec<VisibilityWindow>> {
    let samples = ((t_end - t_begin) / step).floor() as usize;
    let time_at = |k: usize| if k > samples { t_end } else { t_begin + k as f64 * step };
    let last = if time_at(samples) < t_end { samples + 1 } else { samples };

    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    let mut prev_t = t_begin;
    let mut prev_vis = false;
    for k in 0..=last {
        let t = time_at(k);
        let vis = visible_at(spec, gs, sat, t)?;
        match (k, prev_vis, vis) {
            (0, _, true) => open = Some(t),
            (_, false, true) if k > 0 => open = Some(refine(spec, gs, sat, prev_t, t)?),
            (_, true, false) => {
                let end = refine(spec, gs, sat, t, prev_t)?;
                if let Some(start) = open.take() {
                    if start < end {
                        out.push(VisibilityWindow { sat, start, end });
                    }
                }
            }
            _ => {}
        }
        prev_t = t;
        prev_vis = vis;
    }
    if let Some(start) = open {
        if start < prev_t {
            out.push(VisibilityWindow {
                sat,
                start,
                end: prev_t,
            });
        }
    }
    Ok(out)
}

/// Bisects between an invisible instant and a visible one; returns the visible bracket end.
fn refine(
    spec: &ConstellationSpec,
    gs: &GroundStation,
    sat: SatId,
    mut invisible: f64,
    mut visible: f64,
) -> Result<f64> {
    while (visible - invisible).abs() > EDGE_RESOLUTION_S {
        let mid = 0.5 * (visible + invisible);
        if visible_at(spec, gs, sat, mid)? {
            visible = mid;
        } else {
            invisible = mid;
        }
    }
    Ok(visible)
}

/// Writes windows as CSV with columns `sat_orbit, sat_slot, start_s, end_s`.
pub fn write_windows_csv<W: Write>(windows: &[VisibilityWindow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sat_orbit", "sat_slot", "start_s", "end_s"])?;
    for win in windows {
        w.write_record(&[
            win.sat.orbit.to_string(),
            win.sat.slot.to_string(),
            format!("{:.3}", win.start),
            format!("{:.3}", win.end),
        ])?;
    }
    w.flush()?;
    Ok(())
}
