//! AWGN link budget between a satellite and the ground station, and the time it takes to move
//! a payload across that link.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::orbit::PhysicalConstants;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1000.0).log10()
}

pub fn dbi_to_linear(dbi: f64) -> f64 {
    10f64.powf(dbi / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// P, watts
    pub tx_power: f64,
    /// G_m, linear
    pub gain_sat: f64,
    /// G_g, linear
    pub gain_gs: f64,
    /// T, kelvin
    pub noise_temperature: f64,
    /// B, hertz
    pub bandwidth: f64,
    /// f, hertz
    pub carrier_frequency: f64,
    /// When set, the link runs at this rate (bits/s) instead of the Shannon rate.
    pub fixed_rate: Option<f64>,
    /// t_m, seconds
    pub processing_delay_sat: f64,
    /// t_s, seconds
    pub processing_delay_gs: f64,
    pub boltzmann: f64,
    pub speed_of_light: f64,
}

impl Default for LinkParams {
    /// 40 dBm transmit power, 6.98 dBi on both ends, 2.4 GHz carrier, 354.81 K noise
    /// temperature, 1 MHz bandwidth and a fixed 16 Mb/s rate.
    fn default() -> Self {
        let consts = PhysicalConstants::default();
        Self {
            tx_power: dbm_to_watts(40.0),
            gain_sat: dbi_to_linear(6.98),
            gain_gs: dbi_to_linear(6.98),
            noise_temperature: 354.81,
            bandwidth: 1e6,
            carrier_frequency: 2.4e9,
            fixed_rate: Some(16e6),
            processing_delay_sat: 0.0,
            processing_delay_gs: 0.0,
            boltzmann: consts.boltzmann,
            speed_of_light: consts.speed_of_light,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tx_power", self.tx_power),
            ("gain_sat", self.gain_sat),
            ("gain_gs", self.gain_gs),
            ("noise_temperature", self.noise_temperature),
            ("bandwidth", self.bandwidth),
            ("carrier_frequency", self.carrier_frequency),
            ("boltzmann", self.boltzmann),
            ("speed_of_light", self.speed_of_light),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::arg(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(r) = self.fixed_rate {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::arg(format!("fixed rate must be positive, got {r}")));
            }
        }
        if self.processing_delay_sat < 0.0 || self.processing_delay_gs < 0.0 {
            return Err(Error::arg("processing delays must be non-negative"));
        }
        Ok(())
    }
}

/// Number of samples and bits per sample of a transfer (z·|𝒫| bits in total).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PayloadSpec {
    pub sample_count: u64,
    pub bits_per_sample: u64,
}

impl PayloadSpec {
    /// A model transfer: one 64-bit float per parameter.
    pub fn model(param_count: usize) -> Self {
        Self {
            sample_count: param_count as u64,
            bits_per_sample: 64,
        }
    }

    pub fn bits(&self) -> f64 {
        self.sample_count as f64 * self.bits_per_sample as f64
    }
}

fn check_distance(distance: f64) -> Result<()> {
    if distance > 0.0 && distance.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("distance must be positive, got {distance}")))
    }
}

/// Free-space path loss (4π·d·f/c)² as a linear factor.
pub fn free_space_path_loss(distance: f64, frequency: f64, speed_of_light: f64) -> Result<f64> {
    check_distance(distance)?;
    Ok((4.0 * PI * distance * frequency / speed_of_light).powi(2))
}

/// Linear SNR P·G_m·G_g / (K·T·B·L).
pub fn snr(params: &LinkParams, distance: f64) -> Result<f64> {
    let loss = free_space_path_loss(distance, params.carrier_frequency, params.speed_of_light)?;
    Ok(params.tx_power * params.gain_sat * params.gain_gs
        / (params.boltzmann * params.noise_temperature * params.bandwidth * loss))
}

pub fn shannon_rate(bandwidth: f64, snr: f64) -> f64 {
    bandwidth * (1.0 + snr).log2()
}

/// Achievable rate in bits/s: the fixed override when present, otherwise B·log2(1 + SNR).
pub fn achievable_rate(params: &LinkParams, distance: f64) -> Result<f64> {
    check_distance(distance)?;
    match params.fixed_rate {
        Some(rate) => Ok(rate),
        None => Ok(shannon_rate(params.bandwidth, snr(params, distance)?)),
    }
}

/// Transmission + propagation + processing delay for one payload.
pub fn transfer_time(payload: &PayloadSpec, params: &LinkParams, distance: f64) -> Result<f64> {
    let rate = achievable_rate(params, distance)?;
    Ok(payload.bits() / rate
        + distance / params.speed_of_light
        + params.processing_delay_sat
        + params.processing_delay_gs)
}
