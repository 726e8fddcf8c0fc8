//! Temporal multiplexing with a storage cavity: `K` generation bins, the
//! first heralded photon is stored and read out at a fixed slot after the
//! last bin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ValidatedConfig;
use crate::error::{Error, Result};
use crate::readout;

/// Published temporal-multiplexing benchmark on a different platform,
/// reported next to projections for scale only.
pub const LITERATURE_K: u32 = 40;
pub const LITERATURE_ENHANCEMENT: &str = "×9.7(5)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplexPlan {
    pub k: u32,
    /// Cavity cycles between generation bins.
    #[serde(default = "one")]
    pub bin_spacing: u32,
    pub p_herald: f64,
    /// Readout efficiency η(T) for T = 1, 2, ...
    pub readout_curve: Vec<f64>,
    /// Extra cycles between the last bin and the output slot.
    #[serde(default)]
    pub switch_latency: u32,
}

fn one() -> u32 {
    1
}

impl MultiplexPlan {
    /// Plan with η(T) taken from the readout model of `cfg`, long enough
    /// for every K up to `max_k`.
    pub fn from_config(cfg: &ValidatedConfig, k: u32, max_k: u32, bin_spacing: u32, switch_latency: u32, p_herald: f64) -> Result<Self> {
        let needed = max_k.max(k) * bin_spacing + switch_latency;
        let readout_curve = readout::readout_curve(cfg, needed)?.into_iter().map(|p| p.total).collect();
        Ok(Self { k, bin_spacing, p_herald, readout_curve, switch_latency })
    }

    /// Storage delay from bin `bin` (1-based) to the output slot.
    pub fn delay(&self, bin: u32) -> u32 {
        (self.k - bin + 1) * self.bin_spacing + self.switch_latency
    }

    fn eta(&self, delay: u32) -> f64 {
        self.readout_curve[delay as usize - 1]
    }

    fn check(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("K must be ≥ 1".into()));
        }
        if self.bin_spacing < 1 {
            return Err(Error::Config("bin_spacing must be ≥ 1 cycle".into()));
        }
        if !(0.0..=1.0).contains(&self.p_herald) {
            return Err(Error::NonPhysicalParameter(format!("p_herald must be in [0, 1], got {}", self.p_herald)));
        }
        if self.readout_curve.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::NonPhysicalParameter("readout curve values must be in [0, 1]".into()));
        }
        let required = self.k * self.bin_spacing + self.switch_latency;
        if (self.readout_curve.len() as u64) < required as u64 {
            return Err(Error::CurveRangeExceeded { available: self.readout_curve.len() as u32, required });
        }
        Ok(())
    }

    pub fn with_k(&self, k: u32) -> Self {
        Self { k, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplexOutcome {
    pub k: u32,
    pub p_out: f64,
    /// `p_out / (p_herald · η(T_K))`.
    pub enhancement: f64,
    /// Probability that bin `k` is the first success and is read out.
    pub contributions: Vec<f64>,
}

pub fn multiplex_success(plan: &MultiplexPlan) -> Result<MultiplexOutcome> {
    plan.check()?;
    let p = plan.p_herald;
    let mut contributions = Vec::with_capacity(plan.k as usize);
    let mut none_yet = 1.0;
    for bin in 1..=plan.k {
        contributions.push(none_yet * p * plan.eta(plan.delay(bin)));
        none_yet *= 1.0 - p;
    }
    let p_out = contributions.iter().sum::<f64>();
    let single = p * plan.eta(plan.delay(plan.k));
    if single <= 0.0 {
        return Err(Error::DivisionByZeroRate("p_herald·η(T_K)".into()));
    }
    Ok(MultiplexOutcome { k: plan.k, p_out, enhancement: p_out / single, contributions })
}

/// Outcomes for K = 1..=max_k.
pub fn scan(plan: &MultiplexPlan, max_k: u32) -> Result<Vec<MultiplexOutcome>> {
    if max_k < 1 {
        return Err(Error::Config("max_K must be ≥ 1".into()));
    }
    (1..=max_k).into_par_iter().map(|k| multiplex_success(&plan.with_k(k))).collect()
}

/// K maximizing `p_out` over 1..=max_k; ties go to the smaller K.
pub fn optimal_k(plan: &MultiplexPlan, max_k: u32) -> Result<u32> {
    let outcomes = scan(plan, max_k)?;
    let mut best = &outcomes[0];
    for o in &outcomes[1..] {
        if o.p_out > best.p_out {
            best = o;
        }
    }
    Ok(best.k)
}
