//! Unit conversions and the radiative rate of a T1 -> S0 transition.
//!
//! The radiative decay rate constant follows the classical oscillator
//! expression
//!
//! ```text
//! k_r = 2 π ν² e² / (ε0 m_e c³) · f
//! ```
//!
//! with ν the transition frequency in Hz and `f` the oscillator strength.
//! Wavelengths are vacuum wavelengths; no refractive-index correction is
//! applied.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("{quantity} must be positive, got {value}")]
    NonPositive { quantity: &'static str, value: f64 },
    #[error("transition frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("oscillator strength must be finite and non-negative, got {0}")]
    BadOscillatorStrength(f64),
}

/// Fixed CODATA 2018 constants (SI units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Elementary charge, 1.602176634e-19 C (exact).
    pub elementary_charge: f64,
    /// Vacuum permittivity, 8.8541878128e-12 F/m.
    pub vacuum_permittivity: f64,
    /// Electron mass, 9.1093837015e-31 kg.
    pub electron_mass: f64,
    /// Speed of light, 299792458 m/s (exact).
    pub speed_of_light: f64,
    /// Planck constant, 6.62607015e-34 J s (exact).
    pub planck: f64,
}

pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
    elementary_charge: 1.602_176_634e-19,
    vacuum_permittivity: 8.854_187_812_8e-12,
    electron_mass: 9.109_383_701_5e-31,
    speed_of_light: 299_792_458.0,
    planck: 6.626_070_15e-34,
};

const NM_PER_M: f64 = 1e9;

fn positive(quantity: &'static str, value: f64) -> Result<f64, PhysicsError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(PhysicsError::NonPositive { quantity, value })
    }
}

/// ν = c / λ, with λ in nanometres.
pub fn wavelength_to_frequency(wavelength_nm: f64) -> Result<f64, PhysicsError> {
    let lambda = positive("wavelength", wavelength_nm)?;
    Ok(CODATA_2018.speed_of_light * NM_PER_M / lambda)
}

/// λ = c / ν, returned in nanometres.
pub fn frequency_to_wavelength(frequency_hz: f64) -> Result<f64, PhysicsError> {
    let nu = positive("frequency", frequency_hz)?;
    Ok(CODATA_2018.speed_of_light * NM_PER_M / nu)
}

/// Photon energy in eV for a frequency in Hz.
pub fn frequency_to_ev(frequency_hz: f64) -> Result<f64, PhysicsError> {
    let nu = positive("frequency", frequency_hz)?;
    Ok(CODATA_2018.planck * nu / CODATA_2018.elementary_charge)
}

pub fn ev_to_frequency(energy_ev: f64) -> Result<f64, PhysicsError> {
    let e = positive("energy", energy_ev)?;
    Ok(e * CODATA_2018.elementary_charge / CODATA_2018.planck)
}

/// Wavenumber in cm^-1 for a wavelength in nm.
pub fn wavelength_to_wavenumber(wavelength_nm: f64) -> Result<f64, PhysicsError> {
    let lambda = positive("wavelength", wavelength_nm)?;
    Ok(1e7 / lambda)
}

pub fn log10_rate(rate_per_s: f64) -> Result<f64, PhysicsError> {
    Ok(positive("rate", rate_per_s)?.log10())
}

pub fn rate_from_log10(log_rate: f64) -> f64 {
    10f64.powf(log_rate)
}

/// A T1 -> S0 transition. The spectral coordinate is stored as a frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord {
    frequency_hz: f64,
    oscillator_strength: f64,
}

impl TransitionRecord {
    pub fn from_frequency(frequency_hz: f64, oscillator_strength: f64) -> Result<Self, PhysicsError> {
        if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
            return Err(PhysicsError::NonPositiveFrequency(frequency_hz));
        }
        if !(oscillator_strength >= 0.0 && oscillator_strength.is_finite()) {
            return Err(PhysicsError::BadOscillatorStrength(oscillator_strength));
        }
        Ok(Self {
            frequency_hz,
            oscillator_strength,
        })
    }

    pub fn from_wavelength(wavelength_nm: f64, oscillator_strength: f64) -> Result<Self, PhysicsError> {
        Self::from_frequency(wavelength_to_frequency(wavelength_nm)?, oscillator_strength)
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    pub fn wavelength_nm(&self) -> f64 {
        CODATA_2018.speed_of_light * NM_PER_M / self.frequency_hz
    }

    pub fn oscillator_strength(&self) -> f64 {
        self.oscillator_strength
    }
}

/// Radiative rate constant in s^-1.
pub fn kr_from_transition(t: &TransitionRecord) -> f64 {
    kr_with_constants(t, &CODATA_2018)
}

pub fn kr_with_constants(t: &TransitionRecord, k: &PhysicalConstants) -> f64 {
    let prefactor = 2.0 * std::f64::consts::PI * k.elementary_charge * k.elementary_charge
        / (k.vacuum_permittivity * k.electron_mass * k.speed_of_light.powi(3));
    prefactor * t.frequency_hz * t.frequency_hz * t.oscillator_strength
}
