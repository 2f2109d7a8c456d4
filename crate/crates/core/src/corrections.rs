//! Perturbative roughness and finite-temperature corrections, applied as
//! multipliers on a base Casimir force.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::units::{C, HBAR, K_BOLTZMANN, ZETA3};

/// Largest A/z for which the roughness expansion is accepted.
pub const MAX_ROUGHNESS_RATIO: f64 = 0.3;
/// Largest η for which the thermal expansion is accepted.
pub const MAX_ETA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RoughnessSpec {
    /// rms amplitude, m
    pub amplitude: f64,
}

/// Thermal expansion parameter and its polynomial at one separation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThermalSpec {
    pub temperature: f64,
    pub eta: f64,
    pub f_eta: f64,
}

impl ThermalSpec {
    pub fn at(temperature: f64, z: f64) -> Result<Self> {
        if !(temperature >= 0.0) {
            return Err(Error::domain(format!("temperature must be non-negative, got {temperature} K")));
        }
        if !(z > 0.0) {
            return Err(Error::domain(format!("separation must be positive, got {z} m")));
        }
        let eta = thermal_eta(temperature, z);
        Ok(Self {
            temperature,
            eta,
            f_eta: thermal_polynomial(eta),
        })
    }
}

/// η = k_B T z / (ħ c), i.e. 2π k_B T z / (h c).
pub fn thermal_eta(temperature: f64, z: f64) -> f64 {
    K_BOLTZMANN * temperature * z / (HBAR * C)
}

/// f(η) = (ζ(3)/2π) η³ − (π²/45) η⁴.
pub fn thermal_polynomial(eta: f64) -> f64 {
    ZETA3 / (2.0 * PI) * eta.powi(3) - PI * PI / 45.0 * eta.powi(4)
}

/// 1 + 6 (A/z)².
pub fn roughness_factor(amplitude: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::domain(format!("separation must be positive, got {z} m")));
    }
    if !(amplitude >= 0.0) {
        return Err(Error::domain(format!("roughness amplitude must be non-negative, got {amplitude} m")));
    }
    let ratio = amplitude / z;
    if ratio >= MAX_ROUGHNESS_RATIO {
        return Err(Error::Validity(format!(
            "roughness ratio A/z = {ratio:.4} is not below {MAX_ROUGHNESS_RATIO}"
        )));
    }
    Ok(1.0 + 6.0 * ratio * ratio)
}

/// 1 + (720/π²) f(η).
pub fn temperature_factor(temperature: f64, z: f64) -> Result<f64> {
    let spec = ThermalSpec::at(temperature, z)?;
    if spec.eta >= MAX_ETA {
        return Err(Error::Validity(format!(
            "thermal parameter eta = {:.4} at T = {temperature} K, z = {z:e} m is not below {MAX_ETA}",
            spec.eta
        )));
    }
    Ok(1.0 + 720.0 / (PI * PI) * spec.f_eta)
}

/// Base force times both correction factors.
pub fn corrected_force(base: f64, amplitude: f64, temperature: f64, z: f64) -> Result<f64> {
    Ok(base * roughness_factor(amplitude, z)? * temperature_factor(temperature, z)?)
}
