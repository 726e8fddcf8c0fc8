//! Physical parameter set and its validation.
//!
//! Every field carries its unit in its name. The on-disk form is a JSON
//! document with the top-level keys `scheme`, `cavity`, `pulses`,
//! `detectors`, `noise`, `source` and `fock_cutoff`; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Relative tolerance on the SFWM and BSFWM energy-conservation relations.
pub const ENERGY_TOLERANCE: f64 = 1e-4;

/// Relative tolerance on `cavity_freq_mhz * cycle_time_ns == 1000`.
pub const CYCLE_TOLERANCE: f64 = 1e-6;

/// Vacuum wavelengths of the six fields, in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavelengthScheme {
    pub lambda_pump_nm: f64,
    pub lambda_s_nm: f64,
    pub lambda_h_nm: f64,
    pub lambda_p_nm: f64,
    pub lambda_q_nm: f64,
    pub lambda_r_nm: f64,
}

impl WavelengthScheme {
    /// Output wavelength implied by `ω_r = ω_s − (ω_q − ω_p)`.
    pub fn translated_wavelength_nm(&self) -> f64 {
        1.0 / (1.0 / self.lambda_s_nm - (1.0 / self.lambda_q_nm - 1.0 / self.lambda_p_nm))
    }

    /// Relative mismatch of `2/λ_pump = 1/λ_s + 1/λ_h`.
    pub fn sfwm_mismatch(&self) -> f64 {
        let pump = 2.0 / self.lambda_pump_nm;
        (pump - 1.0 / self.lambda_s_nm - 1.0 / self.lambda_h_nm).abs() / pump
    }

    /// Relative mismatch of the configured `λ_r` against the translated wavelength.
    pub fn bsfwm_mismatch(&self) -> f64 {
        let expected = 1.0 / self.translated_wavelength_nm();
        (1.0 / self.lambda_r_nm - expected).abs() / expected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberCavityParams {
    pub length_m: f64,
    pub cycle_time_ns: f64,
    pub cavity_freq_mhz: f64,
    /// 1/e lifetime of seeded light leaking from the cavity.
    pub ringdown_lifetime_cycles: f64,
    /// Storage lifetime seen by the spontaneously generated signal.
    pub memory_lifetime_cycles: f64,
    /// Control/signal group-velocity walk-off.
    pub walkoff_beta_ps_per_m: f64,
    pub dispersion_psi2_ps2_per_cycle: f64,
    /// Per-cycle slip of the stored signal relative to the control pulses.
    pub mismatch_delta_ps_per_cycle: f64,
    pub reflectivity_h: f64,
    pub reflectivity_r: f64,
    pub reflectivity_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseParams {
    pub energy_pump_nj: f64,
    pub energy_p_nj: f64,
    pub energy_q_nj: f64,
    pub tau_fwhm_ps: f64,
    /// Fitted nonlinear coefficient, in (ps/m)/nJ so that
    /// `γ√(E_p E_q)/(3β)` is dimensionless.
    pub gamma_nl: f64,
    pub rep_rate_mhz: f64,
    pub clock_rate_khz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    /// Herald first-exit transmission times collection and detection.
    pub eta_herald_path: f64,
    /// Signal-monitor collection and detection.
    pub eta_s_path: f64,
    /// Output-signal collection and detection, per SNSPD.
    pub eta_r_path: f64,
    pub dark_prob_per_gate: f64,
    pub splitter_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Mean Raman noise photons in the output mode per trigger per nJ of p-control.
    pub noise_mean_per_nj: f64,
    pub mode_count_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    /// Mean photon pairs per pump pulse.
    pub mu: f64,
    pub schmidt_modes: f64,
    /// Signal spectral FWHM in ordinary frequency.
    pub signal_bandwidth_thz: f64,
    /// RMS intensity duration of the signal at generation.
    pub signal_duration_rms_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: WavelengthScheme,
    pub cavity: FiberCavityParams,
    pub pulses: PulseParams,
    pub detectors: DetectorParams,
    pub noise: NoiseParams,
    pub source: SourceParams,
    pub fock_cutoff: usize,
}

/// Quantities computed once from a validated configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derived {
    /// Gaussian control duration parameter `τ_FWHM/√(4 ln 2)`.
    pub tau_ps: f64,
    /// Walk-off parameter `βL/τ`.
    pub zeta: f64,
    /// Per-cycle survival from the ring-down lifetime.
    pub ringdown_survival: f64,
    /// Per-cycle survival from the memory lifetime.
    pub memory_survival: f64,
    pub lambda_r_nm: f64,
}

/// A configuration whose invariants hold. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: ExperimentConfig,
    derived: Derived,
}

impl ValidatedConfig {
    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn derived(&self) -> &Derived {
        &self.derived
    }

    pub fn into_inner(self) -> ExperimentConfig {
        self.config
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = ExperimentConfig;

    fn deref(&self) -> &ExperimentConfig {
        &self.config
    }
}

/// Control duration parameter for a Gaussian intensity FWHM.
pub fn tau_from_fwhm(tau_fwhm_ps: f64) -> f64 {
    tau_fwhm_ps / (4.0 * std::f64::consts::LN_2).sqrt()
}

/// Walk-off parameter `ζ = βL/τ`.
pub fn zeta(walkoff_beta_ps_per_m: f64, length_m: f64, tau_ps: f64) -> f64 {
    walkoff_beta_ps_per_m * length_m / tau_ps
}

/// Per-cycle survival `exp(−1/lifetime)`; an infinite lifetime gives 1.
pub fn survival_from_lifetime(lifetime_cycles: f64) -> Result<f64> {
    if lifetime_cycles.is_nan() || lifetime_cycles <= 0.0 {
        return Err(Error::NonPhysicalParameter(format!(
            "lifetime must be > 0 cycles, got {lifetime_cycles}"
        )));
    }
    Ok((-1.0 / lifetime_cycles).exp())
}

/// Per-cycle survival of the cavity from its ring-down lifetime.
pub fn derived_survival(cavity: &FiberCavityParams) -> Result<f64> {
    survival_from_lifetime(cavity.ringdown_lifetime_cycles)
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPhysicalParameter(format!("{name} must be finite, got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPhysicalParameter(format!("{name} must be > 0, got {v}")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::NonPhysicalParameter(format!("{name} must be >= 0, got {v}")))
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::NonPhysicalParameter(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Pretty JSON with a trailing newline; stable under parse → serialize.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the compact JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&compact))
    }

    /// Applies `dotted.key=value` overrides. Each key must already exist and
    /// the value is parsed as JSON (bare numbers work as-is).
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            set_dotted(&mut doc, key.trim(), raw.trim())?;
        }
        Self::from_value(doc)
    }

    pub fn validate(self) -> Result<ValidatedConfig> {
        validate_config(self)
    }
}

/// Sets an existing dotted key inside a JSON document.
pub fn set_dotted(doc: &mut Value, key: &str, raw: &str) -> Result<()> {
    let mut cursor = doc;
    for part in key.split('.') {
        cursor = cursor
            .get_mut(part)
            .ok_or_else(|| Error::Config(format!("override key `{key}` does not exist")))?;
    }
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    if cursor.is_object() {
        return Err(Error::Config(format!("override key `{key}` names a section")));
    }
    *cursor = value;
    Ok(())
}

/// Checks every invariant and attaches the derived quantities.
pub fn validate_config(raw: ExperimentConfig) -> Result<ValidatedConfig> {
    let s = &raw.scheme;
    for (name, v) in [
        ("scheme.lambda_pump_nm", s.lambda_pump_nm),
        ("scheme.lambda_s_nm", s.lambda_s_nm),
        ("scheme.lambda_h_nm", s.lambda_h_nm),
        ("scheme.lambda_p_nm", s.lambda_p_nm),
        ("scheme.lambda_q_nm", s.lambda_q_nm),
        ("scheme.lambda_r_nm", s.lambda_r_nm),
    ] {
        check_positive(name, v)?;
    }
    let sfwm = s.sfwm_mismatch();
    if sfwm > ENERGY_TOLERANCE {
        return Err(Error::EnergyConservationViolated {
            relation: "SFWM 2/λ_pump = 1/λ_s + 1/λ_h",
            mismatch: sfwm,
            tolerance: ENERGY_TOLERANCE,
        });
    }
    let lambda_r = s.translated_wavelength_nm();
    if !(lambda_r.is_finite() && lambda_r > 0.0) {
        return Err(Error::NonPhysicalParameter(format!(
            "translated wavelength is not physical: {lambda_r} nm"
        )));
    }
    let bsfwm = s.bsfwm_mismatch();
    if bsfwm > ENERGY_TOLERANCE {
        return Err(Error::EnergyConservationViolated {
            relation: "BSFWM 1/λ_r = 1/λ_s − (1/λ_q − 1/λ_p)",
            mismatch: bsfwm,
            tolerance: ENERGY_TOLERANCE,
        });
    }

    let c = &raw.cavity;
    check_positive("cavity.length_m", c.length_m)?;
    check_positive("cavity.cycle_time_ns", c.cycle_time_ns)?;
    check_positive("cavity.cavity_freq_mhz", c.cavity_freq_mhz)?;
    let product = c.cavity_freq_mhz * c.cycle_time_ns * 1e-3;
    if (product - 1.0).abs() > CYCLE_TOLERANCE {
        return Err(Error::NonPhysicalParameter(format!(
            "cavity_freq_mhz * cycle_time_ns = {:.9} (expected 1000 within {CYCLE_TOLERANCE:.0e})",
            product * 1e3
        )));
    }
    check_positive("cavity.ringdown_lifetime_cycles", c.ringdown_lifetime_cycles)?;
    check_positive("cavity.memory_lifetime_cycles", c.memory_lifetime_cycles)?;
    check_positive("cavity.walkoff_beta_ps_per_m", c.walkoff_beta_ps_per_m)?;
    check_nonneg("cavity.dispersion_psi2_ps2_per_cycle", c.dispersion_psi2_ps2_per_cycle)?;
    check_finite("cavity.mismatch_delta_ps_per_cycle", c.mismatch_delta_ps_per_cycle)?;
    check_unit("cavity.reflectivity_h", c.reflectivity_h)?;
    check_unit("cavity.reflectivity_r", c.reflectivity_r)?;
    check_unit("cavity.reflectivity_s", c.reflectivity_s)?;

    let p = &raw.pulses;
    check_nonneg("pulses.energy_pump_nj", p.energy_pump_nj)?;
    check_nonneg("pulses.energy_p_nj", p.energy_p_nj)?;
    check_nonneg("pulses.energy_q_nj", p.energy_q_nj)?;
    check_positive("pulses.tau_fwhm_ps", p.tau_fwhm_ps)?;
    check_nonneg("pulses.gamma_nl", p.gamma_nl)?;
    check_positive("pulses.rep_rate_mhz", p.rep_rate_mhz)?;
    check_positive("pulses.clock_rate_khz", p.clock_rate_khz)?;

    let d = &raw.detectors;
    check_unit("detectors.eta_herald_path", d.eta_herald_path)?;
    check_unit("detectors.eta_s_path", d.eta_s_path)?;
    check_unit("detectors.eta_r_path", d.eta_r_path)?;
    check_unit("detectors.dark_prob_per_gate", d.dark_prob_per_gate)?;
    check_unit("detectors.splitter_ratio", d.splitter_ratio)?;

    let n = &raw.noise;
    check_nonneg("noise.noise_mean_per_nj", n.noise_mean_per_nj)?;
    check_finite("noise.mode_count_m", n.mode_count_m)?;
    if n.mode_count_m < 1.0 {
        return Err(Error::NonPhysicalParameter(format!(
            "noise.mode_count_m must be >= 1, got {}",
            n.mode_count_m
        )));
    }

    let src = &raw.source;
    check_nonneg("source.mu", src.mu)?;
    check_finite("source.schmidt_modes", src.schmidt_modes)?;
    if src.schmidt_modes < 1.0 {
        return Err(Error::NonPhysicalParameter(format!(
            "source.schmidt_modes must be >= 1, got {}",
            src.schmidt_modes
        )));
    }
    check_positive("source.signal_bandwidth_thz", src.signal_bandwidth_thz)?;
    check_positive("source.signal_duration_rms_ps", src.signal_duration_rms_ps)?;

    if raw.fock_cutoff < 4 {
        return Err(Error::NonPhysicalParameter(format!(
            "fock_cutoff must be >= 4, got {}",
            raw.fock_cutoff
        )));
    }

    let tau_ps = tau_from_fwhm(p.tau_fwhm_ps);
    let derived = Derived {
        tau_ps,
        zeta: zeta(c.walkoff_beta_ps_per_m, c.length_m, tau_ps),
        ringdown_survival: derived_survival(c)?,
        memory_survival: survival_from_lifetime(c.memory_lifetime_cycles)?,
        lambda_r_nm: lambda_r,
    };
    Ok(ValidatedConfig { config: raw, derived })
}
