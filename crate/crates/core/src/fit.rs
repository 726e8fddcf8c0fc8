//! Decay-curve fits: a single exponential for cavity ring-down and the
//! storage model (loss, dispersion, walk-off) for memory readout.

use serde::{Deserialize, Serialize};

use crate::config::ValidatedConfig;
use crate::error::{Error, Result};
use crate::lm::{levenberg_marquardt, LmOptions, LmOutcome};
use crate::readout;

/// One sample of a decay series. `stderr ≤ 0` or absent means unweighted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    #[serde(rename = "T")]
    pub delay: f64,
    pub value: f64,
    #[serde(default)]
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub parameters: Vec<FitParameter>,
    /// `1 − SS_res/SS_tot` on the data scale.
    pub r_squared: f64,
    pub chi_squared: f64,
    pub dof: usize,
    pub residual_rms: f64,
    pub max_abs_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

fn weights(series: &[SeriesPoint]) -> Vec<f64> {
    let weighted = series.iter().all(|p| p.stderr.is_some_and(|s| s > 0.0));
    series
        .iter()
        .map(|p| if weighted { 1.0 / p.stderr.unwrap() } else { 1.0 })
        .collect()
}

fn summarize(
    model: &str,
    names: &[&str],
    series: &[SeriesPoint],
    outcome: &LmOutcome,
    predicted: &[f64],
    physical: &dyn Fn(&[f64]) -> Vec<f64>,
    physical_jac: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<FitResult> {
    let m = series.len();
    let n = names.len();
    let dof = m.saturating_sub(n);
    let chi2 = outcome.cost;
    let mean = series.iter().map(|p| p.value).sum::<f64>() / m as f64;
    let ss_tot: f64 = series.iter().map(|p| (p.value - mean).powi(2)).sum();
    let resid: Vec<f64> = series.iter().zip(predicted).map(|(p, y)| p.value - y).collect();
    let ss_res: f64 = resid.iter().map(|r| r * r).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { f64::NAN };

    let scale = if dof > 0 { chi2 / dof as f64 } else { 0.0 };
    let cov = outcome
        .unscaled_covariance()
        .ok_or_else(|| Error::SingularFit("normal matrix is singular".into()))?;
    let values = physical(&outcome.params);
    let dvalue = physical_jac(&outcome.params);
    let parameters = names
        .iter()
        .enumerate()
        .map(|(i, name)| FitParameter {
            name: (*name).to_owned(),
            value: values[i],
            std_error: dvalue[i].abs() * (cov[(i, i)].max(0.0) * scale).sqrt(),
        })
        .collect();
    Ok(FitResult {
        model: model.to_owned(),
        parameters,
        r_squared,
        chi_squared: chi2,
        dof,
        residual_rms: (ss_res / m as f64).sqrt(),
        max_abs_residual: resid.iter().fold(0.0, |a, r| a.max(r.abs())),
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

/// Least-squares fit of `A·exp(−T/T₁)`. Parameters are reported as
/// `amplitude` and `lifetime` (cycles).
pub fn fit_exponential(series: &[SeriesPoint]) -> Result<FitResult> {
    if series.len() < 3 {
        return Err(Error::SingularFit(format!("need at least 3 points, got {}", series.len())));
    }
    if series.iter().any(|p| !(p.value > 0.0) || !p.delay.is_finite()) {
        return Err(Error::SingularFit("exponential fit needs finite delays and positive values".into()));
    }
    // log-linear start
    let m = series.len() as f64;
    let (sx, sy) = series.iter().fold((0.0, 0.0), |(a, b), p| (a + p.delay, b + p.value.ln()));
    let (mx, my) = (sx / m, sy / m);
    let sxx: f64 = series.iter().map(|p| (p.delay - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::SingularFit("all points share one delay".into()));
    }
    let slope = series.iter().map(|p| (p.delay - mx) * (p.value.ln() - my)).sum::<f64>() / sxx;
    let spread = series.iter().map(|p| p.value.ln()).fold(f64::NEG_INFINITY, f64::max)
        - series.iter().map(|p| p.value.ln()).fold(f64::INFINITY, f64::min);
    if !(slope < 0.0) || spread < 1e-12 {
        return Err(Error::SingularFit("series does not decay (lifetime → ∞)".into()));
    }
    let log_a0 = my - slope * mx;
    let rate0 = -slope;

    let w = weights(series);
    // parameters: ln A, decay rate 1/T₁
    let model = |p: &[f64], t: f64| (p[0] - p[1] * t).exp();
    let residual = |p: &[f64]| -> Result<Vec<f64>> {
        Ok(series.iter().zip(&w).map(|(s, wi)| wi * (model(p, s.delay) - s.value)).collect())
    };
    let outcome = levenberg_marquardt(residual, &[log_a0, rate0], LmOptions::default())?;
    if !(outcome.params[1] > 0.0) {
        return Err(Error::SingularFit("fitted decay rate is not positive".into()));
    }
    let predicted: Vec<f64> = series.iter().map(|s| model(&outcome.params, s.delay)).collect();
    summarize(
        "exponential",
        &["amplitude", "lifetime"],
        series,
        &outcome,
        &predicted,
        &|p| vec![p[0].exp(), 1.0 / p[1]],
        &|p| vec![p[0].exp(), 1.0 / (p[1] * p[1])],
    )
}

/// Parameters the memory model can float.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryParam {
    Amplitude,
    Lifetime,
    Delta,
    Psi2,
}

impl MemoryParam {
    pub fn name(self) -> &'static str {
        match self {
            MemoryParam::Amplitude => "amplitude",
            MemoryParam::Lifetime => "lifetime",
            MemoryParam::Delta => "delta",
            MemoryParam::Psi2 => "psi2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "amplitude" => Ok(MemoryParam::Amplitude),
            "lifetime" => Ok(MemoryParam::Lifetime),
            "delta" => Ok(MemoryParam::Delta),
            "psi2" => Ok(MemoryParam::Psi2),
            other => Err(Error::Config(format!("unknown memory-model parameter `{other}`"))),
        }
    }
}

/// Starting values for the memory model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemoryModelGuess {
    pub amplitude: f64,
    pub lifetime: f64,
    pub delta: f64,
    pub psi2: f64,
}

impl MemoryModelGuess {
    pub fn from_config(cfg: &ValidatedConfig, amplitude: f64) -> Self {
        Self {
            amplitude,
            lifetime: cfg.cavity.memory_lifetime_cycles,
            delta: cfg.cavity.mismatch_delta_ps_per_cycle,
            psi2: cfg.cavity.dispersion_psi2_ps2_per_cycle,
        }
    }

    fn get(&self, p: MemoryParam) -> f64 {
        match p {
            MemoryParam::Amplitude => self.amplitude,
            MemoryParam::Lifetime => self.lifetime,
            MemoryParam::Delta => self.delta,
            MemoryParam::Psi2 => self.psi2,
        }
    }

    fn set(&mut self, p: MemoryParam, v: f64) {
        match p {
            MemoryParam::Amplitude => self.amplitude = v,
            MemoryParam::Lifetime => self.lifetime = v,
            MemoryParam::Delta => self.delta = v,
            MemoryParam::Psi2 => self.psi2 = v,
        }
    }
}

/// `amplitude · total(T)` with the storage parameters taken from `params`.
pub fn memory_model_curve(cfg: &ValidatedConfig, params: &MemoryModelGuess, delays: &[f64]) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    let mut raw = cfg.config().clone();
    raw.cavity.memory_lifetime_cycles = params.lifetime;
    raw.cavity.mismatch_delta_ps_per_cycle = params.delta;
    raw.cavity.dispersion_psi2_ps2_per_cycle = params.psi2;
    let local = raw.validate()?;
    let (e_p, e_q) = (local.pulses.energy_p_nj, local.pulses.energy_q_nj);
    delays
        .par_iter()
        .map(|&t| readout::readout_at(&local, t, e_p, e_q).map(|p| params.amplitude * p.total))
        .collect()
}

/// Nonlinear least squares of the storage model against a readout-delay
/// series, floating `free` and holding the rest of `guess` fixed.
pub fn fit_memory_model(
    series: &[SeriesPoint],
    cfg: &ValidatedConfig,
    free: &[MemoryParam],
    guess: MemoryModelGuess,
) -> Result<FitResult> {
    if series.len() < 10 {
        return Err(Error::SingularFit(format!("memory model needs at least 10 delays, got {}", series.len())));
    }
    if free.is_empty() {
        return Err(Error::Config("no free parameters".into()));
    }
    let mut seen = Vec::new();
    for p in free {
        if seen.contains(p) {
            return Err(Error::Config(format!("parameter `{}` listed twice", p.name())));
        }
        seen.push(*p);
    }
    let delays: Vec<f64> = series.iter().map(|p| p.delay).collect();
    let w = weights(series);
    // lifetime and psi2 are fitted on a log scale to stay positive
    let to_internal = |p: MemoryParam, v: f64| match p {
        MemoryParam::Lifetime => v.ln(),
        MemoryParam::Psi2 => v.max(1e-12).ln(),
        _ => v,
    };
    let from_internal = |p: MemoryParam, u: f64| match p {
        MemoryParam::Lifetime | MemoryParam::Psi2 => u.exp(),
        _ => u,
    };
    let unpack = |u: &[f64]| {
        let mut g = guess;
        for (p, v) in free.iter().zip(u) {
            g.set(*p, from_internal(*p, *v));
        }
        g
    };
    let residual = |u: &[f64]| -> Result<Vec<f64>> {
        let y = memory_model_curve(cfg, &unpack(u), &delays)?;
        Ok(series.iter().zip(&y).zip(&w).map(|((s, yi), wi)| wi * (yi - s.value)).collect())
    };
    let x0: Vec<f64> = free.iter().map(|p| to_internal(*p, guess.get(*p))).collect();
    let outcome = levenberg_marquardt(residual, &x0, LmOptions::default())?;
    if !outcome.converged {
        return Err(Error::NoConvergence { iterations: outcome.iterations, residual: outcome.cost.sqrt() });
    }
    let predicted = memory_model_curve(cfg, &unpack(&outcome.params), &delays)?;
    let names: Vec<&str> = free.iter().map(|p| p.name()).collect();
    summarize(
        "memory",
        &names,
        series,
        &outcome,
        &predicted,
        &|u| free.iter().zip(u).map(|(p, v)| from_internal(*p, *v)).collect(),
        &|u| {
            free.iter()
                .zip(u)
                .map(|(p, v)| match p {
                    MemoryParam::Lifetime | MemoryParam::Psi2 => v.exp(),
                    _ => 1.0,
                })
                .collect()
        },
    )
}
