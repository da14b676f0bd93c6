//! Physical constants, the dimensionless parameter set, and the closed-form
//! scaling relations that tie laboratory quantities to it.
//!
//! Every frequency inside the crate is a ratio to the mean mechanical
//! frequency, so the mean mechanical frequency is exactly 1. Quantities quoted
//! in hertz are ordinary frequencies and are divided directly by the reference
//! frequency; the 2π factors only appear where a physical energy or rate is
//! needed (photon energy, thermal occupancy, drive amplitudes).

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// CODATA 2018 constants used by the conversions in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Boltzmann constant, J/K.
    pub k_boltzmann: f64,
    /// Speed of light, m/s.
    pub c_light: f64,
    /// Planck mass, kg.
    pub planck_mass: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    hbar: 1.054_571_817e-34,
    k_boltzmann: 1.380_649e-23,
    c_light: 299_792_458.0,
    planck_mass: 2.176_434e-8,
};

/// Ratio of an SI frequency to the reference frequency.
///
/// Both arguments must use the same convention (ordinary or angular).
pub fn to_dimensionless(si_value: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) || !reference.is_finite() {
        return Err(Error::domain(format!(
            "reference frequency must be positive, got {reference}"
        )));
    }
    Ok(si_value / reference)
}

/// Inverse of [`to_dimensionless`].
pub fn from_dimensionless(value: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) || !reference.is_finite() {
        return Err(Error::domain(format!(
            "reference frequency must be positive, got {reference}"
        )));
    }
    Ok(value * reference)
}

/// Angular frequency 2πc/λ of a laser with vacuum wavelength `wavelength` (m).
pub fn laser_angular_frequency(wavelength: f64) -> Result<f64> {
    if !(wavelength > 0.0) {
        return Err(Error::domain(format!(
            "laser wavelength must be positive, got {wavelength}"
        )));
    }
    Ok(2.0 * PI * CONSTANTS.c_light / wavelength)
}

/// Drive amplitude E = √(2κ_in P / ħω_o) in s⁻¹.
///
/// `kappa_in` and `laser_angular_freq` are angular (rad/s).
pub fn drive_amplitude_from_power(power: f64, kappa_in: f64, laser_angular_freq: f64) -> Result<f64> {
    if power < 0.0 || !power.is_finite() {
        return Err(Error::domain(format!("laser power must be non-negative, got {power}")));
    }
    if !(kappa_in > 0.0) || !(laser_angular_freq > 0.0) {
        return Err(Error::domain("input decay rate and laser frequency must be positive"));
    }
    Ok((2.0 * kappa_in * power / (CONSTANTS.hbar * laser_angular_freq)).sqrt())
}

/// Inverse of [`drive_amplitude_from_power`].
pub fn power_from_drive_amplitude(drive: f64, kappa_in: f64, laser_angular_freq: f64) -> Result<f64> {
    if drive < 0.0 {
        return Err(Error::domain(format!("drive amplitude must be non-negative, got {drive}")));
    }
    if !(kappa_in > 0.0) || !(laser_angular_freq > 0.0) {
        return Err(Error::domain("input decay rate and laser frequency must be positive"));
    }
    Ok(drive * drive * CONSTANTS.hbar * laser_angular_freq / (2.0 * kappa_in))
}

/// Bose–Einstein mean occupancy at angular frequency `omega_si` (rad/s).
pub fn thermal_occupancy(omega_si: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let x = CONSTANTS.hbar * omega_si / (CONSTANTS.k_boltzmann * temperature);
    1.0 / x.exp_m1()
}

/// β_NL = β₀ ħ m ω_b / (m_p² c²), with `omega_b_si` angular.
pub fn beta_nl_from_beta0(beta0: f64, mass: f64, omega_b_si: f64) -> Result<f64> {
    if beta0 < 0.0 || mass < 0.0 || omega_b_si < 0.0 {
        return Err(Error::domain("beta0, mass and frequency must be non-negative"));
    }
    Ok(beta0 * beta_scale(mass, omega_b_si))
}

/// β₀ from β_NL; the inverse of [`beta_nl_from_beta0`].
pub fn beta0_from_beta_nl(beta_nl: f64, mass: f64, omega_b_si: f64) -> Result<f64> {
    if beta_nl < 0.0 {
        return Err(Error::domain("beta_nl must be non-negative"));
    }
    if !(mass > 0.0) || !(omega_b_si > 0.0) {
        return Err(Error::domain(
            "converting beta_nl back to beta0 needs a positive mass and frequency",
        ));
    }
    Ok(beta_nl / beta_scale(mass, omega_b_si))
}

fn beta_scale(mass: f64, omega_b_si: f64) -> f64 {
    let mp = CONSTANTS.planck_mass;
    let c = CONSTANTS.c_light;
    CONSTANTS.hbar * mass * omega_b_si / (mp * mp * c * c)
}

/// Time-domain resolution limit k / (|A_lim|² Q) of a freely decaying oscillator.
pub fn resolution_limit(k_decay: f64, amp_limit: f64, q_factor: f64) -> Result<f64> {
    if !(k_decay > 0.0) || !(amp_limit > 0.0) || !(q_factor > 0.0) {
        return Err(Error::domain(
            "decay window, amplitude and quality factor must all be positive",
        ));
    }
    Ok(k_decay / (amp_limit * amp_limit * q_factor))
}

/// Laboratory context needed to move between SI and dimensionless values.
#[derive(Debug, Clone, PartialEq)]
pub struct SiContext {
    /// Mean mechanical frequency ω̄_b/2π in Hz.
    pub omega_b_hz: f64,
    /// Oscillator mass in kg; only needed for β₀ conversions.
    pub mass: Option<f64>,
    /// Laser vacuum wavelength in m.
    pub laser_wavelength: f64,
    /// Bath temperature in K.
    pub temperature: Option<f64>,
}

impl SiContext {
    pub fn new(omega_b_hz: f64, laser_wavelength: f64) -> Result<Self> {
        let ctx = SiContext {
            omega_b_hz,
            mass: None,
            laser_wavelength,
            temperature: None,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_b_hz > 0.0) {
            return Err(Error::domain("omega_b_hz must be positive"));
        }
        if !(self.laser_wavelength > 0.0) {
            return Err(Error::domain("laser wavelength must be positive"));
        }
        if matches!(self.mass, Some(m) if !(m > 0.0)) {
            return Err(Error::domain("mass must be positive"));
        }
        if matches!(self.temperature, Some(t) if t < 0.0) {
            return Err(Error::domain("temperature must be non-negative"));
        }
        Ok(())
    }

    /// Angular reference frequency 2π·ω̄_b in rad/s.
    pub fn omega_b_angular(&self) -> f64 {
        2.0 * PI * self.omega_b_hz
    }

    /// Dimensionless drive amplitude for a laser power in watts, given the
    /// input-port decay rate `kappa_in_hz` (ordinary frequency).
    pub fn drive_from_power(&self, power: f64, kappa_in_hz: f64) -> Result<f64> {
        let w_laser = laser_angular_frequency(self.laser_wavelength)?;
        let e = drive_amplitude_from_power(power, 2.0 * PI * kappa_in_hz, w_laser)?;
        to_dimensionless(e, self.omega_b_angular())
    }

    /// Laser power in watts producing the dimensionless drive amplitude `drive`.
    pub fn power_from_drive(&self, drive: f64, kappa_in_hz: f64) -> Result<f64> {
        let w_laser = laser_angular_frequency(self.laser_wavelength)?;
        let e = from_dimensionless(drive, self.omega_b_angular())?;
        power_from_drive_amplitude(e, 2.0 * PI * kappa_in_hz, w_laser)
    }
}

/// Dimensionless parameters of the cavity plus two-membrane model.
///
/// All rates and frequencies are in units of the mean mechanical frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub omega_b1: f64,
    pub omega_b2: f64,
    /// Amplitude decay rates of the two resonators.
    pub gamma1: f64,
    pub gamma2: f64,
    /// Single-photon optomechanical couplings.
    pub g1: f64,
    pub g2: f64,
    /// Total cavity decay rate.
    pub kappa: f64,
    /// Input-port cavity decay rate.
    pub kappa_in: f64,
    /// Cavity detuning Δ₁.
    pub delta1: f64,
    /// Modulation (two-tone beat) frequency Δ₂.
    pub delta2: f64,
    /// Amplitude of the tone at −Δ₂ in the cavity frame.
    pub drive_h: f64,
    /// Amplitude of the tone at zero frequency in the cavity frame.
    pub drive_c: f64,
    pub nbar1: f64,
    pub nbar2: f64,
    pub beta_nl: f64,
    /// Bright-mode phase reference θ.
    pub theta: f64,
}

pub const BETA_SOFT_LIMIT: f64 = 1e-3;
pub const WEAK_COUPLING_LIMIT: f64 = 1e-2;

impl SystemParams {
    /// Two identical resonators with the given damping and coupling; drives off.
    pub fn identical(gamma: f64, g: f64, kappa: f64, delta1: f64, delta2: f64, nbar: f64) -> Self {
        SystemParams {
            omega_b1: 1.0,
            omega_b2: 1.0,
            gamma1: gamma,
            gamma2: gamma,
            g1: g,
            g2: g,
            kappa,
            kappa_in: kappa / 2.0,
            delta1,
            delta2,
            drive_h: 0.0,
            drive_c: 0.0,
            nbar1: nbar,
            nbar2: nbar,
            beta_nl: 0.0,
            theta: 0.0,
        }
    }

    /// Dimensionless values quoted for the ideal two-identical-resonator case:
    /// ω̄_b/2π = 525 kHz, κ/2π = 2.2 MHz, g/2π = 1 Hz, Q = 10⁷, n̄ = 40.
    pub fn paper_baseline() -> Self {
        SystemParams::identical(1e-7, 1.9048e-6, 4.1905, 1.2857, 1.0, 40.0)
    }

    /// Split the mechanical frequencies symmetrically by ±`delta` about 1.
    pub fn with_mismatch(mut self, delta: f64) -> Self {
        self.omega_b1 = 1.0 - delta;
        self.omega_b2 = 1.0 + delta;
        self
    }

    /// Half the frequency difference δ = |ω_b1 − ω_b2|/2.
    pub fn delta(&self) -> f64 {
        (self.omega_b1 - self.omega_b2).abs() / 2.0
    }

    pub fn mean_omega(&self) -> f64 {
        (self.omega_b1 + self.omega_b2) / 2.0
    }

    /// Effective bright-mode coupling √(g₁² + g₂²).
    pub fn g_bright(&self) -> f64 {
        self.g1.hypot(self.g2)
    }

    /// Detuning of the beat frequency from the mean mechanical frequency, Δ₂ − ω̄.
    pub fn drive_detuning(&self) -> f64 {
        self.delta2 - self.mean_omega()
    }

    /// Check hard invariants; returns the list of soft warnings on success.
    pub fn validate(&self) -> Result<Vec<String>> {
        let all = [
            self.omega_b1,
            self.omega_b2,
            self.gamma1,
            self.gamma2,
            self.g1,
            self.g2,
            self.kappa,
            self.kappa_in,
            self.delta1,
            self.delta2,
            self.drive_h,
            self.drive_c,
            self.nbar1,
            self.nbar2,
            self.beta_nl,
            self.theta,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("all parameters must be finite"));
        }
        if !(self.gamma1 > 0.0 && self.gamma2 > 0.0) {
            return Err(Error::domain("mechanical decay rates must be positive"));
        }
        if !(self.kappa_in > 0.0) || self.kappa < self.kappa_in {
            return Err(Error::domain("cavity decay rates must satisfy kappa >= kappa_in > 0"));
        }
        if self.g1 < 0.0 || self.g2 < 0.0 {
            return Err(Error::domain("optomechanical couplings must be non-negative"));
        }
        if self.nbar1 < 0.0 || self.nbar2 < 0.0 {
            return Err(Error::domain("thermal occupancies must be non-negative"));
        }
        if self.beta_nl < 0.0 {
            return Err(Error::domain("beta_nl must be non-negative"));
        }
        if (self.mean_omega() - 1.0).abs() > f64::EPSILON {
            return Err(Error::domain(format!(
                "mechanical frequencies must average to 1 (got {})",
                self.mean_omega()
            )));
        }
        if !(self.delta2 > 0.0) {
            return Err(Error::domain("modulation frequency delta2 must be positive"));
        }

        let mut warnings = Vec::new();
        if self.beta_nl >= BETA_SOFT_LIMIT {
            warnings.push(format!(
                "beta_nl = {} is outside the perturbative regime (< {BETA_SOFT_LIMIT})",
                self.beta_nl
            ));
        }
        let g_max = self.g1.max(self.g2);
        if g_max / self.kappa > WEAK_COUPLING_LIMIT {
            warnings.push(format!(
                "g/kappa = {:.3e} exceeds the weak-coupling guideline {WEAK_COUPLING_LIMIT}",
                g_max / self.kappa
            ));
        }
        if g_max / self.omega_b1.min(self.omega_b2) > WEAK_COUPLING_LIMIT {
            warnings.push("g/omega_b exceeds the weak-coupling guideline".to_string());
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(warnings)
    }
}
