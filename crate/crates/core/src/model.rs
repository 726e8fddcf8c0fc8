//! Forward model of one clock trigger: pair generation, signal routing
//! through the cavity, readout, Raman noise and detection.
//!
//! Each signal photon leaves immediately through the coating with
//! probability `1 − R_s` (the monitored `s` mode) or is stored. A stored
//! photon is retrieved with the readout probability at delay `T`, leaves
//! through the output coating with `1 − R_r`, and joins the Raman noise in
//! the output mode, which a beam splitter divides between `r1` and `r2`.

use serde::Serialize;

use crate::clicks::{self, detect, Channel, ClickProbabilities};
use crate::config::ValidatedConfig;
use crate::error::Result;
use crate::fock::{tmsv_state, PhotonNumberDistribution};
use crate::readout::{self, ReadoutPoint};

/// Which beams are on for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Setting {
    pub source: bool,
    pub controls: bool,
}

impl Setting {
    pub const READOUT: Setting = Setting { source: true, controls: true };
    pub const CONTROLS_ONLY: Setting = Setting { source: false, controls: true };
    pub const GENERATION_ONLY: Setting = Setting { source: true, controls: false };
    pub const DARK: Setting = Setting { source: false, controls: false };
}

/// Per-photon probabilities of the signal routes and the noise mean at one delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Routing {
    /// Leaves immediately into the monitored `s` mode (before collection).
    pub to_monitor: f64,
    /// Reaches the output mode (before collection).
    pub to_output: f64,
    /// Raman noise photons in the output mode (before collection).
    pub noise_mean: f64,
    pub readout: ReadoutPoint,
}

pub fn routing(cfg: &ValidatedConfig, delay: u32, setting: Setting) -> Result<Routing> {
    let rs = cfg.cavity.reflectivity_s;
    let point = readout::readout_probability(delay, cfg)?;
    let (to_output, noise_mean) = if setting.controls {
        (
            rs * point.total * (1.0 - cfg.cavity.reflectivity_r),
            cfg.noise.noise_mean_per_nj * cfg.pulses.energy_p_nj,
        )
    } else {
        (0.0, 0.0)
    };
    Ok(Routing { to_monitor: 1.0 - rs, to_output, noise_mean, readout: point })
}

/// Joint photon-number state of modes `h`, `s`, `r1`, `r2` before detection.
pub fn build_state(cfg: &ValidatedConfig, route: &Routing, setting: Setting) -> Result<PhotonNumberDistribution> {
    let mu = if setting.source { cfg.source.mu } else { 0.0 };
    let rs = cfg.cavity.reflectivity_s;
    let stored_fraction = if rs > 0.0 { (route.to_output / rs).min(1.0) } else { 0.0 };
    tmsv_state(mu, cfg.source.schmidt_modes, cfg.fock_cutoff)?
        .split("s", ("s", "stored"), route.to_monitor)?
        .apply_loss("stored", stored_fraction)?
        .rename("stored", "r")?
        .add_thermal_noise("r", route.noise_mean, cfg.noise.mode_count_m)?
        .split("r", ("r1", "r2"), cfg.detectors.splitter_ratio)
}

/// Exact click probabilities for one setting at one delay.
pub fn click_probabilities(cfg: &ValidatedConfig, delay: u32, setting: Setting) -> Result<ClickProbabilities> {
    let route = routing(cfg, delay, setting)?;
    let state = build_state(cfg, &route, setting)?;
    Ok(detect(&state, &cfg.detectors))
}

/// Measured-style quantities at one readout delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observables {
    pub rate_h_cps: f64,
    pub rate_s_cps: f64,
    pub rate_r_cps: f64,
    pub rate_hr_cps: f64,
    pub rate_hr1r2_cps: f64,
    pub g2_xc_hs_raw: f64,
    pub g2_xc_hs_subtracted: f64,
    pub g2_xc_hr: f64,
    pub g2_ac_heralded: f64,
    pub g2_noise: f64,
    pub heralding_probability: f64,
    pub heralding_efficiency_subtracted: f64,
    pub klyshko_eta_h: f64,
}

/// All four runs of a measurement at one delay and the quantities derived from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub delay: u32,
    pub routing: Routing,
    pub readout_run: ClickProbabilities,
    pub controls_only: ClickProbabilities,
    pub generation_only: ClickProbabilities,
    pub dark_only: ClickProbabilities,
    pub observables: Observables,
}

pub fn predict(cfg: &ValidatedConfig, delay: u32) -> Result<Prediction> {
    let route = routing(cfg, delay, Setting::READOUT)?;
    let run = |setting: Setting| -> Result<ClickProbabilities> {
        let r = if setting.controls {
            route
        } else {
            Routing { to_output: 0.0, noise_mean: 0.0, ..route }
        };
        Ok(detect(&build_state(cfg, &r, setting)?, &cfg.detectors))
    };
    let readout_run = run(Setting::READOUT)?;
    let controls_only = run(Setting::CONTROLS_ONLY)?;
    let generation_only = run(Setting::GENERATION_ONLY)?;
    let dark_only = run(Setting::DARK)?;

    let clock_hz = cfg.pulses.clock_rate_khz * 1e3;
    let observables = Observables {
        rate_h_cps: readout_run.single(Channel::H) * clock_hz,
        rate_s_cps: readout_run.single(Channel::S) * clock_hz,
        rate_r_cps: readout_run.single(Channel::R) * clock_hz,
        rate_hr_cps: readout_run.joint(&[Channel::H, Channel::R]) * clock_hz,
        rate_hr1r2_cps: readout_run.joint(&[Channel::H, Channel::R1, Channel::R2]) * clock_hz,
        g2_xc_hs_raw: clicks::g2_cross(&generation_only, Channel::H, Channel::S).unwrap_or(f64::NAN),
        g2_xc_hs_subtracted: clicks::g2_cross_subtracted(&generation_only, &dark_only, Channel::H, Channel::S)
            .unwrap_or(f64::NAN),
        g2_xc_hr: clicks::g2_cross(&readout_run, Channel::H, Channel::R).unwrap_or(f64::NAN),
        g2_ac_heralded: clicks::g2_heralded_auto(&readout_run).unwrap_or(f64::NAN),
        g2_noise: clicks::g2_unheralded_auto(&controls_only).unwrap_or(f64::NAN),
        heralding_probability: clicks::heralding_probability(&readout_run).unwrap_or(f64::NAN),
        heralding_efficiency_subtracted: clicks::heralding_efficiency_subtracted(&readout_run, &controls_only)
            .unwrap_or(f64::NAN),
        klyshko_eta_h: clicks::klyshko(&generation_only).unwrap_or(f64::NAN),
    };
    Ok(Prediction { delay, routing: route, readout_run, controls_only, generation_only, dark_only, observables })
}

/// One point of the incoherent-mixture estimate of the heralded output
/// auto-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixturePoint {
    pub delay: u32,
    /// Heralded signal detection probability without noise or darks.
    pub signal_mean: f64,
    /// Heralded auto-correlation of the signal alone.
    pub signal_g2: f64,
    /// Noise detection probability without darks.
    pub noise_mean: f64,
    pub noise_g2: f64,
    pub g2: f64,
}

/// Mixture-model heralded auto-correlation at each delay: the signal and the
/// noise are evaluated separately and combined with [`clicks::g2_mixture`].
pub fn mixture_curve(cfg: &ValidatedConfig, delays: &[u32]) -> Result<Vec<MixturePoint>> {
    use rayon::prelude::*;
    let mut quiet = cfg.config().clone();
    quiet.detectors.dark_prob_per_gate = 0.0;
    let mut signal_only = quiet.clone();
    signal_only.noise.noise_mean_per_nj = 0.0;
    let quiet = quiet.validate()?;
    let signal_only = signal_only.validate()?;

    let noise = click_probabilities(&quiet, 1, Setting::CONTROLS_ONLY)?;
    let noise_mean = noise.single(Channel::R);
    let noise_g2 = clicks::g2_unheralded_auto(&noise)?;

    delays
        .par_iter()
        .map(|&delay| {
            let sig = click_probabilities(&signal_only, delay, Setting::READOUT)?;
            let signal_mean = clicks::heralding_probability(&sig)?;
            let signal_g2 = clicks::g2_heralded_auto(&sig).unwrap_or(0.0);
            let g2 = clicks::g2_mixture(signal_g2, signal_mean, noise_g2, noise_mean)?;
            Ok(MixturePoint { delay, signal_mean, signal_g2, noise_mean, noise_g2, g2 })
        })
        .collect()
}
