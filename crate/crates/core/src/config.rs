//! Experiment configuration: a line-oriented `section.key = value` file.
//!
//! `#` starts a comment, blank lines are ignored, every key is optional and unknown keys are
//! rejected. Omitted keys keep their defaults, which reproduce the reference setup (5×8
//! Walker-delta at 500 km and 80°, ground station at Rolla MO, 40 dBm / 6.98 dBi / 2.4 GHz /
//! 354.81 K / 16 Mb/s links, I = 300, η = 0.001, batch 32, η_g = 0.001, γ1 = 1, γ2 = 10).

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{load_idx, non_iid_partition, ClassSplit, Dataset, GaussianMixture};
use crate::engine::{ClusterSpace, DistillConfig, GeneratorConfig, GeneratorMode, LeoShotConfig, RetrainConfig};
use crate::error::{ConfigError, Result};
use crate::link::{dbi_to_linear, dbm_to_watts, LinkParams};
use crate::nn::{ModelSpec, SgdConfig};
use crate::orbit::{compute_visibility_windows, ConstellationSpec, GroundStation, PhysicalConstants};
use crate::sim::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationSection {
    pub orbits: usize,
    pub sats_per_orbit: usize,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub raan_spread_deg: f64,
    /// In-plane offset between consecutive planes; `None` uses 180°/(orbits·sats_per_orbit).
    pub phase_step_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundStationSection {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub min_elevation_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSection {
    pub tx_power_dbm: f64,
    pub gain_sat_dbi: f64,
    pub gain_gs_dbi: f64,
    pub carrier_hz: f64,
    pub noise_temperature_k: f64,
    pub bandwidth_hz: f64,
    /// `None` selects the Shannon rate.
    pub fixed_rate_bps: Option<f64>,
    pub processing_sat_s: f64,
    pub processing_gs_s: f64,
    pub isl_rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub client_hidden: Vec<usize>,
    pub client_batch_norm: bool,
    pub server_hidden: Vec<usize>,
    pub server_batch_norm: bool,
    pub generator_mode: GeneratorMode,
    pub generator_hidden: Vec<usize>,
    pub noise_dim: usize,
    pub generator_lr: f64,
    pub generator_epochs: usize,
    pub generator_batch: usize,
    /// `None` uses the size of one orbit's training share.
    pub synthetic_samples: Option<usize>,
    pub server_lr: f64,
    pub distill_epochs: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub retrain_epochs: usize,
    pub retrain_lr: f64,
    pub retrain_max_rounds: usize,
    pub retrain_tolerance: f64,
    pub retrain_patience: usize,
    pub cluster_space: ClusterSpace,
    pub heldout_fraction: f64,
    pub fedavg_rounds_max: usize,
    pub local_compute_s: f64,
    pub server_compute_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Gaussian,
    Idx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub source: DataSource,
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub separation: f64,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    /// Keep at most this many IDX samples (0 keeps all).
    pub idx_limit: usize,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSection {
    pub horizon_s: f64,
    pub step_s: f64,
    pub broadcast_initial: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub constellation: ConstellationSection,
    pub ground_station: GroundStationSection,
    pub link: LinkSection,
    pub training: TrainingSection,
    pub data: DataSection,
    pub scenario: ScenarioSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            constellation: ConstellationSection {
                orbits: 5,
                sats_per_orbit: 8,
                altitude_km: 500.0,
                inclination_deg: 80.0,
                raan_spread_deg: 360.0,
                phase_step_deg: None,
            },
            ground_station: GroundStationSection {
                latitude_deg: 37.95,
                longitude_deg: -91.77,
                min_elevation_deg: 10.0,
            },
            link: LinkSection {
                tx_power_dbm: 40.0,
                gain_sat_dbi: 6.98,
                gain_gs_dbi: 6.98,
                carrier_hz: 2.4e9,
                noise_temperature_k: 354.81,
                bandwidth_hz: 1e6,
                fixed_rate_bps: Some(16e6),
                processing_sat_s: 0.0,
                processing_gs_s: 0.0,
                isl_rate_bps: 16e6,
            },
            training: TrainingSection {
                learning_rate: 0.001,
                local_epochs: 300,
                batch_size: 32,
                client_hidden: vec![128, 128],
                client_batch_norm: true,
                server_hidden: vec![64],
                server_batch_norm: true,
                generator_mode: GeneratorMode::Network,
                generator_hidden: vec![64],
                noise_dim: 16,
                generator_lr: 0.001,
                generator_epochs: 300,
                generator_batch: 64,
                synthetic_samples: None,
                server_lr: 0.001,
                distill_epochs: 300,
                gamma1: 1.0,
                gamma2: 10.0,
                retrain_epochs: 5,
                retrain_lr: 0.001,
                retrain_max_rounds: 50,
                retrain_tolerance: 1e-4,
                retrain_patience: 3,
                cluster_space: ClusterSpace::Samples,
                heldout_fraction: 0.2,
                fedavg_rounds_max: 100,
                local_compute_s: 0.0,
                server_compute_s: 0.0,
            },
            data: DataSection {
                source: DataSource::Gaussian,
                classes: 10,
                dim: 16,
                train_per_class: 200,
                test_per_class: 100,
                separation: 4.0,
                train_images: String::new(),
                train_labels: String::new(),
                test_images: String::new(),
                test_labels: String::new(),
                idx_limit: 0,
                split: "0,1:0-3; 2,3,4:4-9".into(),
            },
            scenario: ScenarioSection {
                horizon_s: 259_200.0,
                step_s: 10.0,
                broadcast_initial: true,
                seed: 0,
            },
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_list(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("`{s}` is not a finite number"))
}

fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    s.parse().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{s}` is not true or false")),
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| parse_usize(p.trim())).collect()
}

fn parse_opt_f64(s: &str) -> std::result::Result<Option<f64>, String> {
    if s == "none" {
        Ok(None)
    } else {
        parse_f64(s).map(Some)
    }
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map_or("none".into(), fmt_f64)
}

type Getter = fn(&ExperimentConfig) -> String;
type Setter = fn(&mut ExperimentConfig, &str) -> std::result::Result<(), String>;

macro_rules! fields {
    ($( $key:literal => $($path:ident).+ : $parse:expr, $show:expr; )*) => {
        const FIELDS: &[(&str, Getter, Setter)] = &[
            $( (
                $key,
                |c: &ExperimentConfig| ($show)(&c.$($path).+),
                |c: &mut ExperimentConfig, v: &str| {
                    c.$($path).+ = ($parse)(v)?;
                    Ok(())
                },
            ), )*
        ];
    };
}

fields! {
    "constellation.orbits" => constellation.orbits: parse_usize, |v: &usize| v.to_string();
    "constellation.sats_per_orbit" => constellation.sats_per_orbit: parse_usize, |v: &usize| v.to_string();
    "constellation.altitude_km" => constellation.altitude_km: parse_f64, |v: &f64| fmt_f64(*v);
    "constellation.inclination_deg" => constellation.inclination_deg: parse_f64, |v: &f64| fmt_f64(*v);
    "constellation.raan_spread_deg" => constellation.raan_spread_deg: parse_f64, |v: &f64| fmt_f64(*v);
    "constellation.phase_step_deg" => constellation.phase_step_deg: parse_opt_f64, |v: &Option<f64>| fmt_opt_f64(*v);
    "ground_station.latitude_deg" => ground_station.latitude_deg: parse_f64, |v: &f64| fmt_f64(*v);
    "ground_station.longitude_deg" => ground_station.longitude_deg: parse_f64, |v: &f64| fmt_f64(*v);
    "ground_station.min_elevation_deg" => ground_station.min_elevation_deg: parse_f64, |v: &f64| fmt_f64(*v);
    "link.tx_power_dbm" => link.tx_power_dbm: parse_f64, |v: &f64| fmt_f64(*v);
    "link.gain_sat_dbi" => link.gain_sat_dbi: parse_f64, |v: &f64| fmt_f64(*v);
    "link.gain_gs_dbi" => link.gain_gs_dbi: parse_f64, |v: &f64| fmt_f64(*v);
    "link.carrier_hz" => link.carrier_hz: parse_f64, |v: &f64| fmt_f64(*v);
    "link.noise_temperature_k" => link.noise_temperature_k: parse_f64, |v: &f64| fmt_f64(*v);
    "link.bandwidth_hz" => link.bandwidth_hz: parse_f64, |v: &f64| fmt_f64(*v);
    "link.fixed_rate_bps" => link.fixed_rate_bps: parse_opt_f64, |v: &Option<f64>| fmt_opt_f64(*v);
    "link.processing_sat_s" => link.processing_sat_s: parse_f64, |v: &f64| fmt_f64(*v);
    "link.processing_gs_s" => link.processing_gs_s: parse_f64, |v: &f64| fmt_f64(*v);
    "link.isl_rate_bps" => link.isl_rate_bps: parse_f64, |v: &f64| fmt_f64(*v);
    "training.learning_rate" => training.learning_rate: parse_f64, |v: &f64| fmt_f64(*v);
    "training.local_epochs" => training.local_epochs: parse_usize, |v: &usize| v.to_string();
    "training.batch_size" => training.batch_size: parse_usize, |v: &usize| v.to_string();
    "training.client_hidden" => training.client_hidden: parse_list, |v: &Vec<usize>| fmt_list(v);
    "training.client_batch_norm" => training.client_batch_norm: parse_bool, |v: &bool| v.to_string();
    "training.server_hidden" => training.server_hidden: parse_list, |v: &Vec<usize>| fmt_list(v);
    "training.server_batch_norm" => training.server_batch_norm: parse_bool, |v: &bool| v.to_string();
    "training.generator_mode" => training.generator_mode:
        |s: &str| GeneratorMode::parse(s).ok_or_else(|| format!("`{s}` is not network or direct")),
        |v: &GeneratorMode| v.name().to_string();
    "training.generator_hidden" => training.generator_hidden: parse_list, |v: &Vec<usize>| fmt_list(v);
    "training.noise_dim" => training.noise_dim: parse_usize, |v: &usize| v.to_string();
    "training.generator_lr" => training.generator_lr: parse_f64, |v: &f64| fmt_f64(*v);
    "training.generator_epochs" => training.generator_epochs: parse_usize, |v: &usize| v.to_string();
    "training.generator_batch" => training.generator_batch: parse_usize, |v: &usize| v.to_string();
    "training.synthetic_samples" => training.synthetic_samples:
        |s: &str| if s == "auto" { Ok(None) } else { parse_usize(s).map(Some) },
        |v: &Option<usize>| v.map_or("auto".into(), |n| n.to_string());
    "training.server_lr" => training.server_lr: parse_f64, |v: &f64| fmt_f64(*v);
    "training.distill_epochs" => training.distill_epochs: parse_usize, |v: &usize| v.to_string();
    "training.gamma1" => training.gamma1: parse_f64, |v: &f64| fmt_f64(*v);
    "training.gamma2" => training.gamma2: parse_f64, |v: &f64| fmt_f64(*v);
    "training.retrain_epochs" => training.retrain_epochs: parse_usize, |v: &usize| v.to_string();
    "training.retrain_lr" => training.retrain_lr: parse_f64, |v: &f64| fmt_f64(*v);
    "training.retrain_max_rounds" => training.retrain_max_rounds: parse_usize, |v: &usize| v.to_string();
    "training.retrain_tolerance" => training.retrain_tolerance: parse_f64, |v: &f64| fmt_f64(*v);
    "training.retrain_patience" => training.retrain_patience: parse_usize, |v: &usize| v.to_string();
    "training.cluster_space" => training.cluster_space:
        |s: &str| ClusterSpace::parse(s).ok_or_else(|| format!("`{s}` is not samples or logits")),
        |v: &ClusterSpace| v.name().to_string();
    "training.heldout_fraction" => training.heldout_fraction: parse_f64, |v: &f64| fmt_f64(*v);
    "training.fedavg_rounds_max" => training.fedavg_rounds_max: parse_usize, |v: &usize| v.to_string();
    "training.local_compute_s" => training.local_compute_s: parse_f64, |v: &f64| fmt_f64(*v);
    "training.server_compute_s" => training.server_compute_s: parse_f64, |v: &f64| fmt_f64(*v);
    "data.source" => data.source:
        |s: &str| match s {
            "gaussian" => Ok(DataSource::Gaussian),
            "idx" => Ok(DataSource::Idx),
            _ => Err(format!("`{s}` is not gaussian or idx")),
        },
        |v: &DataSource| match v { DataSource::Gaussian => "gaussian".to_string(), DataSource::Idx => "idx".to_string() };
    "data.classes" => data.classes: parse_usize, |v: &usize| v.to_string();
    "data.dim" => data.dim: parse_usize, |v: &usize| v.to_string();
    "data.train_per_class" => data.train_per_class: parse_usize, |v: &usize| v.to_string();
    "data.test_per_class" => data.test_per_class: parse_usize, |v: &usize| v.to_string();
    "data.separation" => data.separation: parse_f64, |v: &f64| fmt_f64(*v);
    "data.train_images" => data.train_images: |s: &str| Ok::<_, String>(s.to_string()), |v: &String| v.clone();
    "data.train_labels" => data.train_labels: |s: &str| Ok::<_, String>(s.to_string()), |v: &String| v.clone();
    "data.test_images" => data.test_images: |s: &str| Ok::<_, String>(s.to_string()), |v: &String| v.clone();
    "data.test_labels" => data.test_labels: |s: &str| Ok::<_, String>(s.to_string()), |v: &String| v.clone();
    "data.idx_limit" => data.idx_limit: parse_usize, |v: &usize| v.to_string();
    "data.split" => data.split: |s: &str| Ok::<_, String>(s.to_string()), |v: &String| v.clone();
    "scenario.horizon_s" => scenario.horizon_s: parse_f64, |v: &f64| fmt_f64(*v);
    "scenario.step_s" => scenario.step_s: parse_f64, |v: &f64| fmt_f64(*v);
    "scenario.broadcast_initial" => scenario.broadcast_initial: parse_bool, |v: &bool| v.to_string();
    "scenario.seed" => scenario.seed: |s: &str| s.parse::<u64>().map_err(|_| format!("`{s}` is not a seed")), |v: &u64| v.to_string();
}

fn range(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        key: key.into(),
        message: message.into(),
    }
}

fn check(ok: bool, key: &str, message: &str) -> std::result::Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(range(key, message))
    }
}

impl ExperimentConfig {
    /// Every key in canonical order.
    pub fn keys() -> impl Iterator<Item = &'static str> {
        FIELDS.iter().map(|(k, _, _)| *k)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        FIELDS.iter().find(|(k, _, _)| *k == key).map(|(_, g, _)| g(self))
    }

    /// Sets one key; `line` is reported in errors.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> std::result::Result<(), ConfigError> {
        let (_, _, setter) = FIELDS
            .iter()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| ConfigError::UnknownKey {
                line,
                key: key.into(),
            })?;
        setter(self, value).map_err(|message| range(key, message))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected `section.key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if !key.contains('.') {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: format!("key `{key}` lacks a section"),
                });
            }
            cfg.set(key, value.trim(), i + 1)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?)?)
    }

    /// Applies `section.key=value` overrides, then re-validates.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> std::result::Result<(), ConfigError> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                message: format!("override `{o}` is not key=value"),
            })?;
            self.set(k.trim(), v.trim(), 0)?;
        }
        self.validate()
    }

    /// Canonical text: every key, in order, grouped by section.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (key, get, _) in FIELDS {
            let s = key.split('.').next().unwrap();
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = s;
            }
            writeln!(out, "{key} = {}", get(self)).unwrap();
        }
        out
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let c = &self.constellation;
        check(c.orbits >= 1, "constellation.orbits", "must be at least 1")?;
        check(c.sats_per_orbit >= 1, "constellation.sats_per_orbit", "must be at least 1")?;
        check(
            c.altitude_km > 0.0 && c.altitude_km <= 100_000.0,
            "constellation.altitude_km",
            "must lie in (0, 100000]",
        )?;
        check(
            (0.0..=180.0).contains(&c.inclination_deg),
            "constellation.inclination_deg",
            "must lie in [0, 180]",
        )?;
        check(
            c.raan_spread_deg > 0.0 && c.raan_spread_deg <= 360.0,
            "constellation.raan_spread_deg",
            "must lie in (0, 360]",
        )?;
        let g = &self.ground_station;
        check(g.latitude_deg.abs() <= 90.0, "ground_station.latitude_deg", "must lie in [-90, 90]")?;
        check(g.longitude_deg.abs() <= 180.0, "ground_station.longitude_deg", "must lie in [-180, 180]")?;
        check(
            (0.0..90.0).contains(&g.min_elevation_deg),
            "ground_station.min_elevation_deg",
            "must lie in [0, 90)",
        )?;
        let l = &self.link;
        check(
            (-30.0..=90.0).contains(&l.tx_power_dbm),
            "link.tx_power_dbm",
            "must lie in [-30, 90] dBm",
        )?;
        check((-20.0..=80.0).contains(&l.gain_sat_dbi), "link.gain_sat_dbi", "must lie in [-20, 80] dBi")?;
        check((-20.0..=80.0).contains(&l.gain_gs_dbi), "link.gain_gs_dbi", "must lie in [-20, 80] dBi")?;
        check(l.carrier_hz > 0.0, "link.carrier_hz", "must be positive")?;
        check(l.noise_temperature_k > 0.0, "link.noise_temperature_k", "must be positive")?;
        check(l.bandwidth_hz > 0.0, "link.bandwidth_hz", "must be positive")?;
        check(l.fixed_rate_bps.is_none_or(|r| r > 0.0), "link.fixed_rate_bps", "must be positive or none")?;
        check(l.processing_sat_s >= 0.0, "link.processing_sat_s", "must be non-negative")?;
        check(l.processing_gs_s >= 0.0, "link.processing_gs_s", "must be non-negative")?;
        check(l.isl_rate_bps > 0.0, "link.isl_rate_bps", "must be positive")?;
        let t = &self.training;
        for (key, v) in [
            ("training.learning_rate", t.learning_rate),
            ("training.generator_lr", t.generator_lr),
            ("training.server_lr", t.server_lr),
            ("training.retrain_lr", t.retrain_lr),
        ] {
            check(v > 0.0 && v <= 10.0, key, "must lie in (0, 10]")?;
        }
        for (key, v) in [
            ("training.batch_size", t.batch_size),
            ("training.generator_epochs", t.generator_epochs),
            ("training.retrain_max_rounds", t.retrain_max_rounds),
            ("training.retrain_patience", t.retrain_patience),
            ("training.noise_dim", t.noise_dim),
        ] {
            check(v >= 1, key, "must be at least 1")?;
        }
        check(t.generator_batch >= 2, "training.generator_batch", "must be at least 2")?;
        check(
            t.synthetic_samples.is_none_or(|n| n >= 4),
            "training.synthetic_samples",
            "must be at least 4 or auto",
        )?;
        check(t.gamma1 >= 0.0, "training.gamma1", "must be non-negative")?;
        check(t.gamma2 >= 0.0, "training.gamma2", "must be non-negative")?;
        check(t.retrain_tolerance >= 0.0, "training.retrain_tolerance", "must be non-negative")?;
        check(
            t.heldout_fraction > 0.0 && t.heldout_fraction < 1.0,
            "training.heldout_fraction",
            "must lie in (0, 1)",
        )?;
        check(t.local_compute_s >= 0.0, "training.local_compute_s", "must be non-negative")?;
        check(t.server_compute_s >= 0.0, "training.server_compute_s", "must be non-negative")?;
        check(t.client_hidden.iter().all(|&w| w > 0), "training.client_hidden", "widths must be positive")?;
        check(t.server_hidden.iter().all(|&w| w > 0), "training.server_hidden", "widths must be positive")?;
        check(
            t.generator_hidden.iter().all(|&w| w > 0),
            "training.generator_hidden",
            "widths must be positive",
        )?;
        let d = &self.data;
        check(d.classes >= 2 && d.classes <= 256, "data.classes", "must lie in [2, 256]")?;
        check(d.dim >= 1, "data.dim", "must be at least 1")?;
        check(d.train_per_class >= 1, "data.train_per_class", "must be at least 1")?;
        check(d.test_per_class >= 1, "data.test_per_class", "must be at least 1")?;
        check(d.separation >= 0.0, "data.separation", "must be non-negative")?;
        if d.source == DataSource::Idx {
            for (key, v) in [
                ("data.train_images", &d.train_images),
                ("data.train_labels", &d.train_labels),
                ("data.test_images", &d.test_images),
                ("data.test_labels", &d.test_labels),
            ] {
                check(!v.is_empty(), key, "required when data.source = idx")?;
            }
        }
        ClassSplit::parse(&d.split, self.constellation.orbits)
            .and_then(|s| s.validate(self.constellation.orbits, d.classes))
            .map_err(|e| range("data.split", e.to_string()))?;
        let s = &self.scenario;
        check(s.horizon_s > 0.0, "scenario.horizon_s", "must be positive")?;
        check(
            s.step_s > 0.0 && s.step_s <= s.horizon_s,
            "scenario.step_s",
            "must be positive and no longer than the horizon",
        )?;
        Ok(())
    }

    pub fn constellation_spec(&self) -> Result<ConstellationSpec> {
        let c = &self.constellation;
        let mut spec = ConstellationSpec::walker_delta(
            c.orbits,
            c.sats_per_orbit,
            c.altitude_km * 1e3,
            c.inclination_deg.to_radians(),
            c.raan_spread_deg.to_radians(),
            c.phase_step_deg.map(f64::to_radians),
        )?;
        spec.consts = PhysicalConstants::default();
        Ok(spec)
    }

    pub fn ground_station(&self) -> Result<GroundStation> {
        let g = &self.ground_station;
        GroundStation::new(
            g.latitude_deg.to_radians(),
            g.longitude_deg.to_radians(),
            g.min_elevation_deg.to_radians(),
        )
    }

    pub fn link_params(&self) -> LinkParams {
        let l = &self.link;
        LinkParams {
            tx_power: dbm_to_watts(l.tx_power_dbm),
            gain_sat: dbi_to_linear(l.gain_sat_dbi),
            gain_gs: dbi_to_linear(l.gain_gs_dbi),
            noise_temperature: l.noise_temperature_k,
            bandwidth: l.bandwidth_hz,
            carrier_frequency: l.carrier_hz,
            fixed_rate: l.fixed_rate_bps,
            processing_delay_sat: l.processing_sat_s,
            processing_delay_gs: l.processing_gs_s,
            ..LinkParams::default()
        }
    }

    /// Train and test sets. Procedural sets share one mixture drawn from `seed`.
    pub fn datasets(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let d = &self.data;
        match d.source {
            DataSource::Gaussian => {
                let mixture = GaussianMixture::new(seed ^ 0xda7a, d.classes, d.dim, d.separation)?;
                let train = mixture.sample(d.train_per_class, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x7a1))?;
                let test = mixture.sample(d.test_per_class, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x7e57))?;
                Ok((train, test))
            }
            DataSource::Idx => {
                let limit = |ds: Dataset| -> Result<Dataset> {
                    if d.idx_limit == 0 || ds.len() <= d.idx_limit {
                        return Ok(ds);
                    }
                    ds.subset(&(0..d.idx_limit).collect::<Vec<_>>())
                };
                let mut train = limit(load_idx(Path::new(&d.train_images), Path::new(&d.train_labels))?)?;
                let mut test = limit(load_idx(Path::new(&d.test_images), Path::new(&d.test_labels))?)?;
                let k = d.classes.max(train.class_count).max(test.class_count);
                train.class_count = k;
                test.class_count = k;
                Ok((train, test))
            }
        }
    }

    pub fn client_spec(&self, input_width: usize, class_count: usize) -> ModelSpec {
        let t = &self.training;
        ModelSpec::mlp(input_width, &t.client_hidden, class_count, t.client_batch_norm)
    }

    pub fn local_sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.training.learning_rate,
            epochs: self.training.local_epochs,
            batch_size: self.training.batch_size,
        }
    }

    /// Server pipeline settings. `orbit_share` sizes the archive when it is left on auto.
    pub fn leoshot_config(&self, orbit_share: usize) -> LeoShotConfig {
        let t = &self.training;
        LeoShotConfig {
            server_hidden: t.server_hidden.clone(),
            server_batch_norm: t.server_batch_norm,
            generator: GeneratorConfig {
                mode: t.generator_mode,
                noise_dim: t.noise_dim,
                hidden: t.generator_hidden.clone(),
                learning_rate: t.generator_lr,
                epochs: t.generator_epochs,
                batch_size: t.generator_batch,
                sample_count: t.synthetic_samples.unwrap_or(orbit_share).max(4),
            },
            distill: DistillConfig {
                gamma1: t.gamma1,
                gamma2: t.gamma2,
                learning_rate: t.server_lr,
                epochs: t.distill_epochs,
                batch_size: t.batch_size,
            },
            retrain: RetrainConfig {
                epochs: t.retrain_epochs,
                learning_rate: t.retrain_lr,
                batch_size: t.batch_size,
                max_rounds: t.retrain_max_rounds,
                tolerance: t.retrain_tolerance,
                patience: t.retrain_patience,
                cluster_space: t.cluster_space,
                kmeans_iters: 100,
            },
            heldout_fraction: t.heldout_fraction,
        }
    }

    /// Visibility windows over the scenario horizon.
    pub fn windows(&self) -> Result<Vec<crate::orbit::VisibilityWindow>> {
        compute_visibility_windows(
            &self.constellation_spec()?,
            &self.ground_station()?,
            0.0,
            self.scenario.horizon_s,
            self.scenario.step_s,
        )
    }

    /// Full scenario for `seed`: windows, data, partition and model shapes.
    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        let constellation = self.constellation_spec()?;
        let (train, test) = self.datasets(seed)?;
        let split = ClassSplit::parse(&self.data.split, constellation.orbit_count())?;
        let partition = non_iid_partition(
            &train,
            constellation.orbit_count(),
            constellation.sats_per_orbit,
            &split,
            seed ^ 0x9a27,
        )?;
        Ok(Scenario {
            ground_station: self.ground_station()?,
            link: self.link_params(),
            isl_rate: self.link.isl_rate_bps,
            horizon: self.scenario.horizon_s,
            windows: self.windows()?,
            client_spec: self.client_spec(train.feature_dim(), train.class_count),
            local: self.local_sgd(),
            partition,
            train,
            test,
            local_compute_s: self.training.local_compute_s,
            server_compute_s: self.training.server_compute_s,
            broadcast_initial: self.scenario.broadcast_initial,
            constellation,
        })
    }
}
