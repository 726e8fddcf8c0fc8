//! Inverts the forward model so it reproduces a set of measured values.

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ValidatedConfig};
use crate::error::{Error, Result};
use crate::lm::{levenberg_marquardt, LmOptions};
use crate::model::{mixture_curve, predict};
use crate::readout;

/// A measured value the model should reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "quantity", content = "value", rename_all = "snake_case")]
pub enum Target {
    /// Background-subtracted herald/monitor cross-correlation (controls off).
    G2XcHsSubtracted(f64),
    /// Raw herald/monitor cross-correlation (controls off).
    G2XcHsRaw(f64),
    /// Herald singles rate, counts per second.
    RateHerald(f64),
    /// Output singles rate (either SNSPD), counts per second.
    RateOutput(f64),
    /// Unheralded output auto-correlation with controls only.
    G2Noise(f64),
    /// Conversion efficiency of the undispersed signal at the configured energies.
    EtaBsfwm(f64),
    /// Background-subtracted heralding efficiency.
    HeraldingEfficiency(f64),
    /// Raw heralded output auto-correlation.
    G2AcHeralded(f64),
    /// Herald/output cross-correlation.
    G2XcHr(f64),
}

impl Target {
    pub fn value(&self) -> f64 {
        match *self {
            Target::G2XcHsSubtracted(v)
            | Target::G2XcHsRaw(v)
            | Target::RateHerald(v)
            | Target::RateOutput(v)
            | Target::G2Noise(v)
            | Target::EtaBsfwm(v)
            | Target::HeraldingEfficiency(v)
            | Target::G2AcHeralded(v)
            | Target::G2XcHr(v) => v,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::G2XcHsSubtracted(_) => "g2_xc_hs_subtracted",
            Target::G2XcHsRaw(_) => "g2_xc_hs_raw",
            Target::RateHerald(_) => "rate_h_cps",
            Target::RateOutput(_) => "rate_r_cps",
            Target::G2Noise(_) => "g2_noise",
            Target::EtaBsfwm(_) => "eta_bsfwm",
            Target::HeraldingEfficiency(_) => "heralding_efficiency_subtracted",
            Target::G2AcHeralded(_) => "g2_ac_heralded",
            Target::G2XcHr(_) => "g2_xc_hr",
        }
    }
}

/// A configuration entry calibration may adjust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    Mu,
    SchmidtModes,
    EtaHerald,
    EtaS,
    EtaR,
    NoiseMeanPerNj,
    ModeCountM,
    GammaNl,
}

enum Domain {
    Positive,
    Unit,
    AtLeastOne,
}

impl FreeParam {
    pub fn name(self) -> &'static str {
        match self {
            FreeParam::Mu => "source.mu",
            FreeParam::SchmidtModes => "source.schmidt_modes",
            FreeParam::EtaHerald => "detectors.eta_herald_path",
            FreeParam::EtaS => "detectors.eta_s_path",
            FreeParam::EtaR => "detectors.eta_r_path",
            FreeParam::NoiseMeanPerNj => "noise.noise_mean_per_nj",
            FreeParam::ModeCountM => "noise.mode_count_m",
            FreeParam::GammaNl => "pulses.gamma_nl",
        }
    }

    fn domain(self) -> Domain {
        match self {
            FreeParam::EtaHerald | FreeParam::EtaS | FreeParam::EtaR => Domain::Unit,
            FreeParam::ModeCountM | FreeParam::SchmidtModes => Domain::AtLeastOne,
            _ => Domain::Positive,
        }
    }

    fn get(self, c: &ExperimentConfig) -> f64 {
        match self {
            FreeParam::Mu => c.source.mu,
            FreeParam::SchmidtModes => c.source.schmidt_modes,
            FreeParam::EtaHerald => c.detectors.eta_herald_path,
            FreeParam::EtaS => c.detectors.eta_s_path,
            FreeParam::EtaR => c.detectors.eta_r_path,
            FreeParam::NoiseMeanPerNj => c.noise.noise_mean_per_nj,
            FreeParam::ModeCountM => c.noise.mode_count_m,
            FreeParam::GammaNl => c.pulses.gamma_nl,
        }
    }

    fn set(self, c: &mut ExperimentConfig, v: f64) {
        match self {
            FreeParam::Mu => c.source.mu = v,
            FreeParam::SchmidtModes => c.source.schmidt_modes = v,
            FreeParam::EtaHerald => c.detectors.eta_herald_path = v,
            FreeParam::EtaS => c.detectors.eta_s_path = v,
            FreeParam::EtaR => c.detectors.eta_r_path = v,
            FreeParam::NoiseMeanPerNj => c.noise.noise_mean_per_nj = v,
            FreeParam::ModeCountM => c.noise.mode_count_m = v,
            FreeParam::GammaNl => c.pulses.gamma_nl = v,
        }
    }

    fn to_internal(self, v: f64) -> f64 {
        match self.domain() {
            Domain::Positive => v.max(1e-300).ln(),
            Domain::Unit => {
                let v = v.clamp(1e-12, 1.0 - 1e-12);
                (v / (1.0 - v)).ln()
            }
            Domain::AtLeastOne => (v - 1.0).max(1e-12).ln(),
        }
    }

    fn from_internal(self, u: f64) -> f64 {
        match self.domain() {
            Domain::Positive => u.exp(),
            Domain::Unit => 1.0 / (1.0 + (-u).exp()),
            Domain::AtLeastOne => 1.0 + u.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub quantity: String,
    pub target: f64,
    pub model: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub config: ExperimentConfig,
    pub residuals: Vec<Residual>,
    pub iterations: usize,
}

impl Calibration {
    pub fn max_relative_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |a, r| a.max(r.relative.abs()))
    }
}

/// Model value of every target at the given readout delay.
pub fn evaluate_targets(cfg: &ValidatedConfig, targets: &[Target], delay: u32) -> Result<Vec<f64>> {
    let needs_prediction = targets.iter().any(|t| !matches!(t, Target::EtaBsfwm(_)));
    let pred = if needs_prediction { Some(predict(cfg, delay)?) } else { None };
    targets
        .iter()
        .map(|t| {
            let o = pred.as_ref().map(|p| p.observables);
            Ok(match t {
                Target::EtaBsfwm(_) => readout::internal_conversion(cfg)?,
                Target::G2XcHsSubtracted(_) => o.unwrap().g2_xc_hs_subtracted,
                Target::G2XcHsRaw(_) => o.unwrap().g2_xc_hs_raw,
                Target::RateHerald(_) => o.unwrap().rate_h_cps,
                Target::RateOutput(_) => o.unwrap().rate_r_cps,
                Target::G2Noise(_) => o.unwrap().g2_noise,
                Target::HeraldingEfficiency(_) => o.unwrap().heralding_efficiency_subtracted,
                Target::G2AcHeralded(_) => o.unwrap().g2_ac_heralded,
                Target::G2XcHr(_) => o.unwrap().g2_xc_hr,
            })
        })
        .collect()
}

fn residual_table(cfg: &ValidatedConfig, targets: &[Target], delay: u32) -> Result<Vec<Residual>> {
    let values = evaluate_targets(cfg, targets, delay)?;
    Ok(targets
        .iter()
        .zip(values)
        .map(|(t, m)| Residual {
            quantity: t.name().to_owned(),
            target: t.value(),
            model: m,
            relative: m / t.value() - 1.0,
        })
        .collect())
}

/// Adjusts `free` so the model at readout delay `delay` reproduces `targets`.
///
/// When both `GammaNl` and an `EtaBsfwm` target are present, γ is solved
/// first by itself since it is the only entry that target depends on.
pub fn calibrate(start: &ExperimentConfig, targets: &[Target], free: &[FreeParam], delay: u32) -> Result<Calibration> {
    if free.len() > targets.len() {
        return Err(Error::Underdetermined { free: free.len(), targets: targets.len() });
    }
    if targets.iter().any(|t| !(t.value().is_finite() && t.value() != 0.0)) {
        return Err(Error::Config("calibration targets must be finite and nonzero".into()));
    }
    let mut base = start.clone();
    let mut free: Vec<FreeParam> = free.to_vec();
    let mut targets: Vec<Target> = targets.to_vec();
    let mut all_targets = targets.clone();

    if let (Some(fi), Some(ti)) = (
        free.iter().position(|p| *p == FreeParam::GammaNl),
        targets.iter().position(|t| matches!(t, Target::EtaBsfwm(_))),
    ) {
        let cfg = base.clone().validate()?;
        base.pulses.gamma_nl = readout::calibrate_gamma(&cfg, targets[ti].value())?;
        free.remove(fi);
        targets.remove(ti);
    }

    let mut iterations = 0;
    if !free.is_empty() {
        let build = |u: &[f64]| -> Result<ValidatedConfig> {
            let mut c = base.clone();
            for (p, v) in free.iter().zip(u) {
                p.set(&mut c, p.from_internal(*v));
            }
            c.validate()
        };
        let residual = |u: &[f64]| -> Result<Vec<f64>> {
            let cfg = build(u)?;
            let values = evaluate_targets(&cfg, &targets, delay)?;
            Ok(values.iter().zip(&targets).map(|(m, t)| m / t.value() - 1.0).collect())
        };
        let x0: Vec<f64> = free.iter().map(|p| p.to_internal(p.get(&base))).collect();
        let outcome = levenberg_marquardt(residual, &x0, LmOptions { fd_step: 1e-5, ..LmOptions::default() })?;
        iterations = outcome.iterations;
        for (p, v) in free.iter().zip(&outcome.params) {
            p.set(&mut base, p.from_internal(*v));
        }
        let worst = outcome.residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        if free.len() == targets.len() && worst > 1e-6 {
            return Err(Error::NoConvergence { iterations, residual: worst });
        }
    }

    let cfg = base.clone().validate()?;
    all_targets.dedup();
    let residuals = residual_table(&cfg, &all_targets, delay)?;
    Ok(Calibration { config: base, residuals, iterations })
}

/// Measured values used for the primary cavity, with the entries each one pins.
pub fn reference_targets() -> (Vec<Target>, Vec<FreeParam>) {
    (
        vec![
            Target::G2XcHsSubtracted(26.0),
            Target::G2XcHsRaw(16.0),
            Target::RateHerald(474.0),
            Target::RateOutput(3405.0),
            Target::G2Noise(1.09),
            Target::EtaBsfwm(0.8),
            Target::HeraldingEfficiency(0.096),
        ],
        vec![
            FreeParam::Mu,
            FreeParam::EtaS,
            FreeParam::EtaHerald,
            FreeParam::NoiseMeanPerNj,
            FreeParam::ModeCountM,
            FreeParam::GammaNl,
            FreeParam::EtaR,
        ],
    )
}

/// Mixture-model curve from a calibrated config, convenience for reports.
pub fn mixture_report(cfg: &ValidatedConfig, delays: &[u32]) -> Result<Vec<crate::model::MixturePoint>> {
    mixture_curve(cfg, delays)
}
