//! Bragg-scattering readout: the time-resolved conversion angle driven by
//! two walking-off Gaussian control pulses, its overlap with the stored
//! signal envelope, and the storage-decay model versus readout delay.
//!
//! The conversion angle in the signal frame is
//!
//! ```text
//! ξ(t) = A · [erf(t/τ + ζ/2) − erf(t/τ − ζ/2)],   A = γ√(E_p E_q) / (3β)
//! ```
//!
//! and the converted amplitude is `i·e^{4iξ}·sin ξ` times the signal
//! amplitude, so the intensity conversion efficiency is `sin²ξ`.

use nalgebra::Complex;
use serde::Serialize;

use crate::config::ValidatedConfig;
use crate::error::{Error, Result};

/// Error function, accurate to about one ulp.
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Minimum number of samples in a readout time grid.
pub const MIN_GRID_POINTS: usize = 2048;
/// Overlap integrals are refined until successive doublings differ by less than this.
pub const GRID_TOLERANCE: f64 = 1e-6;
const MAX_GRID_POINTS: usize = 1 << 22;

/// The control-pulse interaction window in the signal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlWindow {
    amplitude: f64,
    tau_ps: f64,
    zeta: f64,
}

impl ControlWindow {
    pub fn new(gamma_nl: f64, e_p_nj: f64, e_q_nj: f64, beta_ps_per_m: f64, tau_ps: f64, zeta: f64) -> Result<Self> {
        if !(tau_ps > 0.0) {
            return Err(Error::NonPhysicalParameter(format!("τ must be > 0 ps, got {tau_ps}")));
        }
        if !(beta_ps_per_m > 0.0) {
            return Err(Error::NonPhysicalParameter(format!("β must be > 0 ps/m, got {beta_ps_per_m}")));
        }
        if !(e_p_nj >= 0.0 && e_q_nj >= 0.0) {
            return Err(Error::NonPhysicalParameter(format!(
                "control energies must be >= 0 nJ, got ({e_p_nj}, {e_q_nj})"
            )));
        }
        Ok(Self::from_amplitude(
            gamma_nl * (e_p_nj * e_q_nj).sqrt() / (3.0 * beta_ps_per_m),
            tau_ps,
            zeta,
        ))
    }

    /// Window with a given dimensionless prefactor `γ√(E_p E_q)/(3β)`.
    pub fn from_amplitude(amplitude: f64, tau_ps: f64, zeta: f64) -> Self {
        Self { amplitude, tau_ps, zeta }
    }

    /// Window for the configured controls, with energies overridden.
    pub fn for_energies(cfg: &ValidatedConfig, e_p_nj: f64, e_q_nj: f64) -> Result<Self> {
        let d = cfg.derived();
        Self::new(
            cfg.pulses.gamma_nl,
            e_p_nj,
            e_q_nj,
            cfg.cavity.walkoff_beta_ps_per_m,
            d.tau_ps,
            d.zeta,
        )
    }

    pub fn from_config(cfg: &ValidatedConfig) -> Result<Self> {
        Self::for_energies(cfg, cfg.pulses.energy_p_nj, cfg.pulses.energy_q_nj)
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn tau_ps(&self) -> f64 {
        self.tau_ps
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// Same window with the prefactor scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { amplitude: self.amplitude * factor, ..*self }
    }

    pub fn xi(&self, t_ps: f64) -> f64 {
        let x = t_ps / self.tau_ps;
        let h = 0.5 * self.zeta;
        self.amplitude * (erf(x + h) - erf(x - h))
    }

    pub fn efficiency(&self, t_ps: f64) -> f64 {
        self.xi(t_ps).sin().powi(2)
    }

    /// Converted-field amplitude `i·e^{4iξ}·sin ξ` per unit signal amplitude.
    pub fn conversion_amplitude(&self, t_ps: f64) -> Complex<f64> {
        let xi = self.xi(t_ps);
        Complex::<f64>::i() * Complex::from_polar(1.0, 4.0 * xi) * xi.sin()
    }

    /// Time beyond which ξ has fallen to its erf tails.
    pub fn half_extent_ps(&self) -> f64 {
        self.tau_ps * (1.0 + 0.5 * self.zeta)
    }
}

/// Conversion angle at time `t` for the given controls.
pub fn xi_profile(
    t_ps: f64,
    e_p_nj: f64,
    e_q_nj: f64,
    gamma_nl: f64,
    beta_ps_per_m: f64,
    tau_ps: f64,
    zeta: f64,
) -> Result<f64> {
    Ok(ControlWindow::new(gamma_nl, e_p_nj, e_q_nj, beta_ps_per_m, tau_ps, zeta)?.xi(t_ps))
}

/// Gaussian intensity envelope of the stored signal, normalized to unit area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalEnvelope {
    pub center_offset_ps: f64,
    pub duration_rms_ps: f64,
    /// Accumulated group-delay dispersion `ψ₂·T`.
    pub chirp_ps2: f64,
}

/// RMS angular bandwidth (rad/ps) of a Gaussian with the given FWHM in THz.
pub fn rms_angular_bandwidth(fwhm_thz: f64) -> f64 {
    2.0 * std::f64::consts::PI * fwhm_thz / (8.0 * std::f64::consts::LN_2).sqrt()
}

impl SignalEnvelope {
    pub fn new(center_offset_ps: f64, duration_rms_ps: f64, chirp_ps2: f64) -> Result<Self> {
        if !(duration_rms_ps > 0.0) || !duration_rms_ps.is_finite() {
            return Err(Error::NonPhysicalParameter(format!(
                "envelope duration must be > 0 ps, got {duration_rms_ps}"
            )));
        }
        Ok(Self { center_offset_ps, duration_rms_ps, chirp_ps2 })
    }

    /// Envelope after `cycles` round trips: the centre slips by `Δ·T` and
    /// the RMS duration grows as `σ² = σ₀² + (ψ₂·T·σ_ω)²`.
    pub fn after_cycles(cfg: &ValidatedConfig, cycles: f64) -> Result<Self> {
        let sigma0 = cfg.source.signal_duration_rms_ps;
        let sigma_w = rms_angular_bandwidth(cfg.source.signal_bandwidth_thz);
        let chirp = cfg.cavity.dispersion_psi2_ps2_per_cycle * cycles;
        let width = (sigma0 * sigma0 + (chirp * sigma_w).powi(2)).sqrt();
        Self::new(cfg.cavity.mismatch_delta_ps_per_cycle * cycles, width, chirp)
    }

    pub fn initial(cfg: &ValidatedConfig) -> Result<Self> {
        Self::after_cycles(cfg, 0.0)
    }

    pub fn intensity(&self, t_ps: f64) -> f64 {
        let s = self.duration_rms_ps;
        let z = (t_ps - self.center_offset_ps) / s;
        (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// `ξ(t)` and `sin²ξ(t)` sampled on a uniform grid symmetric about zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutProfile {
    pub time_grid: Vec<f64>,
    pub xi_values: Vec<f64>,
    pub efficiency_values: Vec<f64>,
}

impl ReadoutProfile {
    /// `points` samples covering `[-half_span, half_span]`.
    pub fn sample(window: &ControlWindow, half_span_ps: f64, points: usize) -> Self {
        let points = points.max(3);
        let step = 2.0 * half_span_ps / (points - 1) as f64;
        let time_grid: Vec<f64> = (0..points).map(|i| -half_span_ps + step * i as f64).collect();
        let xi_values: Vec<f64> = time_grid.iter().map(|&t| window.xi(t)).collect();
        let efficiency_values = xi_values.iter().map(|x| x.sin().powi(2)).collect();
        Self { time_grid, xi_values, efficiency_values }
    }

    pub fn step(&self) -> f64 {
        self.time_grid[1] - self.time_grid[0]
    }

    pub fn max_efficiency(&self) -> f64 {
        self.efficiency_values.iter().copied().fold(0.0, f64::max)
    }
}

/// `∫ sin²ξ(t) |A_s(t)|² dt` by the trapezoid rule on the profile grid.
pub fn overlap_efficiency(profile: &ReadoutProfile, envelope: &SignalEnvelope) -> Result<f64> {
    let step = profile.step();
    if envelope.duration_rms_ps < 4.0 * step {
        return Err(Error::GridTooCoarse { width: envelope.duration_rms_ps, step });
    }
    let n = profile.time_grid.len();
    let mut sum = 0.0;
    for (i, (&t, &eff)) in profile.time_grid.iter().zip(&profile.efficiency_values).enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        sum += w * eff * envelope.intensity(t);
    }
    Ok((sum * step).clamp(0.0, 1.0))
}

/// Overlap efficiency on an automatically sized grid, refined by doubling
/// until two successive values agree within [`GRID_TOLERANCE`].
pub fn converged_overlap(window: &ControlWindow, envelope: &SignalEnvelope) -> Result<f64> {
    if window.amplitude() == 0.0 {
        return Ok(0.0);
    }
    let half_span = 5.0 * window.half_extent_ps().max(envelope.duration_rms_ps)
        + envelope.center_offset_ps.abs();
    // start fine enough that the envelope spans at least 8 steps
    let mut points = MIN_GRID_POINTS;
    while 2.0 * half_span / (points - 1) as f64 > envelope.duration_rms_ps / 8.0 {
        points *= 2;
        if points > MAX_GRID_POINTS {
            return Err(Error::GridTooCoarse {
                width: envelope.duration_rms_ps,
                step: 2.0 * half_span / (MAX_GRID_POINTS - 1) as f64,
            });
        }
    }
    let mut prev = overlap_efficiency(&ReadoutProfile::sample(window, half_span, points), envelope)?;
    loop {
        points = 2 * points - 1;
        if points > MAX_GRID_POINTS {
            return Ok(prev);
        }
        let next = overlap_efficiency(&ReadoutProfile::sample(window, half_span, points), envelope)?;
        if (next - prev).abs() < GRID_TOLERANCE {
            return Ok(next);
        }
        prev = next;
    }
}

/// Retrieval at one readout delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReadoutPoint {
    pub delay_cycles: f64,
    /// Storage survival `s^T` from the memory lifetime.
    pub survival: f64,
    pub eta_conv: f64,
    /// Intracavity retrieval probability, excluding coating and collection.
    pub total: f64,
}

/// Readout at a (possibly fractional) delay, for arbitrary control energies.
pub fn readout_at(cfg: &ValidatedConfig, cycles: f64, e_p_nj: f64, e_q_nj: f64) -> Result<ReadoutPoint> {
    let window = ControlWindow::for_energies(cfg, e_p_nj, e_q_nj)?;
    let envelope = SignalEnvelope::after_cycles(cfg, cycles)?;
    let eta_conv = converged_overlap(&window, &envelope)?;
    let survival = cfg.derived().memory_survival.powf(cycles);
    Ok(ReadoutPoint { delay_cycles: cycles, survival, eta_conv, total: survival * eta_conv })
}

/// Survival, conversion and total retrieval after `T ≥ 1` cavity cycles.
pub fn readout_probability(delay_cycles: u32, cfg: &ValidatedConfig) -> Result<ReadoutPoint> {
    if delay_cycles < 1 {
        return Err(Error::NonPhysicalParameter("readout delay must be >= 1 cycle".into()));
    }
    readout_at(cfg, delay_cycles as f64, cfg.pulses.energy_p_nj, cfg.pulses.energy_q_nj)
}

/// Total retrieval for `T = 1..=max_delay`; index 0 holds `T = 1`.
pub fn readout_curve(cfg: &ValidatedConfig, max_delay: u32) -> Result<Vec<ReadoutPoint>> {
    use rayon::prelude::*;
    (1..=max_delay).into_par_iter().map(|t| readout_probability(t, cfg)).collect()
}

/// Delay (cycles) at which the retrieval falls to `1/e` of its `T = 0` value.
pub fn one_over_e_delay(cfg: &ValidatedConfig) -> Result<f64> {
    let (e_p, e_q) = (cfg.pulses.energy_p_nj, cfg.pulses.energy_q_nj);
    let start = readout_at(cfg, 0.0, e_p, e_q)?.total;
    if start == 0.0 {
        return Err(Error::DivisionByZeroRate("no retrieval at T = 0".into()));
    }
    let target = start / std::f64::consts::E;
    let f = |t: f64| readout_at(cfg, t, e_p, e_q).map(|p| p.total - target);
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e7 {
            return Err(Error::NoConvergence { iterations: 0, residual: f(hi)? });
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerScanPoint {
    pub energy_p_nj: f64,
    pub eta_conv: f64,
    pub noise_mean: f64,
}

/// Conversion efficiency and Raman noise mean versus p-control energy at
/// fixed q-control energy. `delay_cycles = 0` uses the undispersed envelope.
pub fn power_scan(e_p_grid: &[f64], cfg: &ValidatedConfig, delay_cycles: u32) -> Result<Vec<PowerScanPoint>> {
    use rayon::prelude::*;
    let e_q = cfg.pulses.energy_q_nj;
    e_p_grid
        .par_iter()
        .map(|&e_p| {
            if !(e_p >= 0.0) {
                return Err(Error::NonPhysicalParameter(format!("energy_p must be >= 0, got {e_p}")));
            }
            let p = readout_at(cfg, delay_cycles as f64, e_p, e_q)?;
            Ok(PowerScanPoint {
                energy_p_nj: e_p,
                eta_conv: p.eta_conv,
                noise_mean: cfg.noise.noise_mean_per_nj * e_p,
            })
        })
        .collect()
}

/// Conversion efficiency of the undispersed envelope at the configured energies.
pub fn internal_conversion(cfg: &ValidatedConfig) -> Result<f64> {
    Ok(readout_at(cfg, 0.0, cfg.pulses.energy_p_nj, cfg.pulses.energy_q_nj)?.eta_conv)
}

/// Nonlinear coefficient that makes the undispersed conversion efficiency at
/// the configured energies equal `target`. `target` must not exceed the
/// saturation peak of the efficiency curve.
pub fn calibrate_gamma(cfg: &ValidatedConfig, target: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::NonPhysicalParameter(format!("target efficiency must be in [0, 1), got {target}")));
    }
    let d = cfg.derived();
    let p = &cfg.pulses;
    let envelope = SignalEnvelope::initial(cfg)?;
    let eta = |a: f64| converged_overlap(&ControlWindow::from_amplitude(a, d.tau_ps, d.zeta), &envelope);
    // peak of sin² at the window centre, where erf difference is 2·erf(ζ/2)
    let a_peak = 0.5 * std::f64::consts::PI / (2.0 * erf(0.5 * d.zeta));
    // locate the efficiency maximum along the prefactor to bound the root
    let mut hi = a_peak;
    let mut best = eta(hi)?;
    for k in 1..=40 {
        let a = a_peak * (1.0 + 0.025 * k as f64);
        let v = eta(a)?;
        if v < best {
            break;
        }
        best = v;
        hi = a;
    }
    if best < target {
        return Err(Error::NoConvergence { iterations: 40, residual: target - best });
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eta(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * a_peak {
            break;
        }
    }
    let amplitude = 0.5 * (lo + hi);
    let scale = (p.energy_p_nj * p.energy_q_nj).sqrt();
    if scale == 0.0 {
        return Err(Error::NonPhysicalParameter("cannot calibrate γ with zero control energy".into()));
    }
    Ok(amplitude * 3.0 * cfg.cavity.walkoff_beta_ps_per_m / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn window(amplitude: f64) -> ControlWindow {
        let tau = crate::config::tau_from_fwhm(13.5);
        ControlWindow::from_amplitude(amplitude, tau, crate::config::zeta(13.5, 2.468, tau))
    }

    #[test]
    fn zero_control_energy_gives_no_conversion() {
        let w = ControlWindow::new(3.0, 0.0, 8.6, 13.5, 8.1, 4.1).unwrap();
        for t in [-30.0, -1.0, 0.0, 2.5, 40.0] {
            assert_eq!(w.xi(t), 0.0);
            assert_eq!(w.efficiency(t), 0.0);
        }
    }

    #[test]
    fn xi_vanishes_far_from_window() {
        let w = window(1.0);
        assert!(w.xi(1e4).abs() < 1e-300);
        assert!(w.xi(-1e4).abs() < 1e-300);
        assert!(w.xi(200.0).abs() < 1e-12);
    }

    #[test]
    fn xi_centre_at_zeta_4_1() {
        // 2·erf(2.05) = 1.99251619208891374 (mpmath, 30 digits)
        let tau = 8.0;
        let w = ControlWindow::from_amplitude(1.0, tau, 4.1);
        assert!((w.xi(0.0) - 1.992_516_192_088_913_7).abs() < 1e-12);
    }

    #[test]
    fn bad_window_parameters() {
        assert!(matches!(
            ControlWindow::new(1.0, 1.0, 1.0, 13.5, 0.0, 4.1),
            Err(Error::NonPhysicalParameter(_))
        ));
        assert!(ControlWindow::new(1.0, 1.0, 1.0, -1.0, 8.0, 4.1).is_err());
        assert!(ControlWindow::new(1.0, -1.0, 1.0, 13.5, 8.0, 4.1).is_err());
    }

    #[test]
    fn conversion_amplitude_modulus() {
        let w = window(0.6);
        for t in [-10.0, 0.0, 3.0] {
            let a = w.conversion_amplitude(t);
            assert!((a.norm_sqr() - w.efficiency(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn narrow_centred_envelope_sees_peak_efficiency() {
        let w = window(0.5);
        let env = SignalEnvelope::new(0.0, 0.05, 0.0).unwrap();
        let eta = converged_overlap(&w, &env).unwrap();
        assert!((eta - w.efficiency(0.0)).abs() < 1e-4);
    }

    #[test]
    fn envelope_outside_window_is_not_converted() {
        let w = window(0.5);
        let env = SignalEnvelope::new(300.0, 2.0, 0.0).unwrap();
        assert!(converged_overlap(&w, &env).unwrap() < 1e-12);
    }

    #[test]
    fn coarse_grid_is_reported() {
        let w = window(0.5);
        let profile = ReadoutProfile::sample(&w, 100.0, 101);
        let env = SignalEnvelope::new(0.0, 3.0, 0.0).unwrap();
        assert!(matches!(overlap_efficiency(&profile, &env), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn overlap_bounded_by_peak() {
        let w = window(0.7);
        let profile = ReadoutProfile::sample(&w, 150.0, 8193);
        let env = SignalEnvelope::new(4.0, 6.0, 0.0).unwrap();
        let eta = overlap_efficiency(&profile, &env).unwrap();
        assert!(eta <= profile.max_efficiency() + 1e-12);
    }

    #[test]
    fn pure_ringdown_limit_is_exponential() {
        let mut cfg = presets::primary();
        cfg.cavity.mismatch_delta_ps_per_cycle = 0.0;
        cfg.cavity.dispersion_psi2_ps2_per_cycle = 0.0;
        let cfg = cfg.validate().unwrap();
        let first = readout_probability(1, &cfg).unwrap();
        let s = cfg.derived().memory_survival;
        for t in [2, 10, 50, 200] {
            let p = readout_probability(t, &cfg).unwrap();
            assert_eq!(p.eta_conv, first.eta_conv);
            let expected = s.powi(t as i32) * first.eta_conv;
            assert!((p.total - expected).abs() <= 1e-14 * expected);
        }
    }

    #[test]
    fn delay_zero_is_rejected() {
        let cfg = presets::primary().validate().unwrap();
        assert!(readout_probability(0, &cfg).is_err());
    }

    #[test]
    fn first_cycle_total_is_about_0_79() {
        let cfg = presets::primary().validate().unwrap();
        let p = readout_probability(1, &cfg).unwrap();
        assert!((p.total - 0.79).abs() < 0.01, "{p:?}");
    }

    #[test]
    fn power_scan_endpoints() {
        let cfg = presets::primary().validate().unwrap();
        let scan = power_scan(&[0.0, 6.9], &cfg, 0).unwrap();
        assert_eq!(scan[0].eta_conv, 0.0);
        assert_eq!(scan[0].noise_mean, 0.0);
        assert!((scan[1].eta_conv - 0.8).abs() < 1e-3);
        assert!(power_scan(&[-1.0], &cfg, 0).is_err());
    }

    #[test]
    fn gamma_calibration_hits_target() {
        let cfg = presets::primary().validate().unwrap();
        let gamma = calibrate_gamma(&cfg, 0.6).unwrap();
        let mut raw = cfg.config().clone();
        raw.pulses.gamma_nl = gamma;
        let cfg = raw.validate().unwrap();
        assert!((internal_conversion(&cfg).unwrap() - 0.6).abs() < 1e-9);
    }
}
