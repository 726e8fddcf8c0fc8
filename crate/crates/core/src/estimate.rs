//! Rates, correlation functions and efficiencies estimated from click
//! records, with bootstrap standard errors over trigger blocks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clicks::{self, Channel, ClickProbabilities};
use crate::error::{Error, Result};
use crate::fit::SeriesPoint;
use crate::trialsim::ClickRecord;

pub const DEFAULT_BLOCK: u64 = 10_000;
pub const DEFAULT_RESAMPLES: usize = 200;

/// Pattern counts accumulated in consecutive blocks of triggers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickCounts {
    block_size: u64,
    blocks: Vec<[u64; 16]>,
    in_last: u64,
    n_triggers: u64,
}

impl ClickCounts {
    pub fn new(block_size: u64) -> Self {
        Self { block_size: block_size.max(1), blocks: Vec::new(), in_last: 0, n_triggers: 0 }
    }

    pub fn push(&mut self, mask: u8) {
        if self.blocks.is_empty() || self.in_last == self.block_size {
            self.blocks.push([0; 16]);
            self.in_last = 0;
        }
        self.blocks.last_mut().unwrap()[(mask & 0xF) as usize] += 1;
        self.in_last += 1;
        self.n_triggers += 1;
    }

    pub fn extend<'a>(&mut self, records: impl IntoIterator<Item = &'a ClickRecord>) {
        for r in records {
            self.push(r.mask);
        }
    }

    pub fn from_records(records: &[ClickRecord], block_size: u64) -> Self {
        let mut c = Self::new(block_size);
        c.extend(records);
        c
    }

    pub fn n_triggers(&self) -> u64 {
        self.n_triggers
    }

    pub fn block_size(&self) -> u64 {
        self.block_size
    }

    pub fn blocks(&self) -> &[[u64; 16]] {
        &self.blocks
    }

    pub fn totals(&self) -> [u64; 16] {
        let mut t = [0u64; 16];
        for b in &self.blocks {
            for (a, v) in t.iter_mut().zip(b) {
                *a += v;
            }
        }
        t
    }

    pub fn frequencies(&self) -> Result<ClickProbabilities> {
        if self.n_triggers == 0 {
            return Err(Error::EmptyInput);
        }
        ClickProbabilities::from_counts(&self.totals())
    }

    /// Counts of one bootstrap resample: blocks drawn with replacement.
    fn resample(&self, rng: &mut ChaCha8Rng) -> [u64; 16] {
        let mut t = [0u64; 16];
        let n = self.blocks.len();
        for _ in 0..n {
            let b = &self.blocks[rng.random_range(0..n)];
            for (a, v) in t.iter_mut().zip(b) {
                *a += v;
            }
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { resamples: DEFAULT_RESAMPLES, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub n_triggers: u64,
    pub pattern: String,
}

/// Point estimate and bootstrap standard error of `stat` over one or more
/// independent runs. Resamples where `stat` fails are skipped.
pub fn bootstrap<F>(runs: &[&ClickCounts], stat: F, opts: BootstrapOptions, pattern: &str) -> Result<CorrelationEstimate>
where
    F: Fn(&[ClickProbabilities]) -> Result<f64> + Sync,
{
    if runs.is_empty() || runs.iter().any(|r| r.n_triggers == 0) {
        return Err(Error::EmptyInput);
    }
    let point: Vec<ClickProbabilities> = runs.iter().map(|r| r.frequencies()).collect::<Result<_>>()?;
    let value = stat(&point)?;
    let samples: Vec<f64> = (0..opts.resamples)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let probs: Option<Vec<ClickProbabilities>> = runs
                .iter()
                .map(|r| ClickProbabilities::from_counts(&r.resample(&mut rng)).ok())
                .collect();
            stat(&probs?).ok().filter(|v| v.is_finite())
        })
        .collect();
    let standard_error = if samples.len() > 1 {
        let m = samples.iter().sum::<f64>() / samples.len() as f64;
        (samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(CorrelationEstimate {
        value,
        standard_error,
        n_triggers: runs.iter().map(|r| r.n_triggers).sum(),
        pattern: pattern.to_owned(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum G2Kind {
    /// Herald and output (either SNSPD).
    CrossHr,
    /// Herald and signal monitor.
    CrossHs,
    HeraldedAuto,
    UnheraldedAuto,
}

impl G2Kind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cross" | "cross_hr" => Ok(G2Kind::CrossHr),
            "cross_hs" => Ok(G2Kind::CrossHs),
            "heralded_auto" => Ok(G2Kind::HeraldedAuto),
            "unheralded_auto" => Ok(G2Kind::UnheraldedAuto),
            _ => Err(Error::Config(format!("unknown g2 kind '{s}'"))),
        }
    }

    fn pattern(self) -> &'static str {
        match self {
            G2Kind::CrossHr => "p(H∧R)/(p(H)p(R))",
            G2Kind::CrossHs => "p(H∧S)/(p(H)p(S))",
            G2Kind::HeraldedAuto => "p(H∧R1∧R2)p(H)/(p(H∧R1)p(H∧R2))",
            G2Kind::UnheraldedAuto => "p(R1∧R2)/(p(R1)p(R2))",
        }
    }

    fn eval(self, p: &ClickProbabilities) -> Result<f64> {
        match self {
            G2Kind::CrossHr => clicks::g2_cross(p, Channel::H, Channel::R),
            G2Kind::CrossHs => clicks::g2_cross(p, Channel::H, Channel::S),
            G2Kind::HeraldedAuto => clicks::g2_heralded_auto(p),
            G2Kind::UnheraldedAuto => clicks::g2_unheralded_auto(p),
        }
    }
}

pub fn estimate_g2(counts: &ClickCounts, kind: G2Kind, opts: BootstrapOptions) -> Result<CorrelationEstimate> {
    bootstrap(&[counts], |p| kind.eval(&p[0]), opts, kind.pattern())
}

/// Herald/monitor cross-correlation after removing accidentals measured in a
/// run with the pump off.
pub fn estimate_g2_subtracted(
    counts: &ClickCounts,
    background: &ClickCounts,
    opts: BootstrapOptions,
) -> Result<CorrelationEstimate> {
    bootstrap(
        &[counts, background],
        |p| clicks::g2_cross_subtracted(&p[0], &p[1], Channel::H, Channel::S),
        opts,
        "g2(H,S) accidental-subtracted",
    )
}

/// `p(H∧S)/p(S)`.
pub fn klyshko_efficiency(counts: &ClickCounts, opts: BootstrapOptions) -> Result<CorrelationEstimate> {
    bootstrap(&[counts], |p| clicks::klyshko(&p[0]), opts, "p(H∧S)/p(S)")
}

pub fn heralding_probability(counts: &ClickCounts, opts: BootstrapOptions) -> Result<CorrelationEstimate> {
    bootstrap(&[counts], |p| clicks::heralding_probability(&p[0]), opts, "p(R|H)")
}

/// `p(R|H) − b(R)` with `b` from a controls-only run.
pub fn heralding_efficiency_subtracted(
    counts: &ClickCounts,
    controls_only: &ClickCounts,
    opts: BootstrapOptions,
) -> Result<CorrelationEstimate> {
    bootstrap(
        &[counts, controls_only],
        |p| clicks::heralding_efficiency_subtracted(&p[0], &p[1]),
        opts,
        "p(R|H) − b(R)",
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub cps: f64,
    pub std_error: f64,
}

impl Rate {
    fn binomial(k: u64, n: u64, clock_hz: f64) -> Self {
        let p = k as f64 / n as f64;
        Self { cps: p * clock_hz, std_error: (p * (1.0 - p) / n as f64).sqrt() * clock_hz }
    }

    pub fn minus(self, other: Rate) -> Rate {
        Rate { cps: self.cps - other.cps, std_error: self.std_error.hypot(other.std_error) }
    }
}

/// Count rates of channels and exact mask patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub n_triggers: u64,
    pub clock_rate_khz: f64,
    /// Singles and coincidences: H, S, R, R1, R2, H&S, H&R, H&R1&R2, R1&R2.
    pub channels: BTreeMap<String, Rate>,
    /// Exactly this set of detectors fired, keyed by mask 0..15.
    pub patterns: BTreeMap<u8, Rate>,
}

impl RateReport {
    pub fn channel(&self, name: &str) -> Option<Rate> {
        self.channels.get(name).copied()
    }

    /// Channel-wise difference, e.g. readout minus controls-only.
    pub fn subtract(&self, background: &RateReport) -> RateReport {
        let channels = self
            .channels
            .iter()
            .map(|(k, v)| (k.clone(), background.channels.get(k).map_or(*v, |b| v.minus(*b))))
            .collect();
        let patterns = self
            .patterns
            .iter()
            .map(|(k, v)| (*k, background.patterns.get(k).map_or(*v, |b| v.minus(*b))))
            .collect();
        RateReport { n_triggers: self.n_triggers, clock_rate_khz: self.clock_rate_khz, channels, patterns }
    }
}

pub const REPORTED_CHANNELS: [(&str, &[Channel]); 9] = [
    ("H", &[Channel::H]),
    ("S", &[Channel::S]),
    ("R", &[Channel::R]),
    ("R1", &[Channel::R1]),
    ("R2", &[Channel::R2]),
    ("H&S", &[Channel::H, Channel::S]),
    ("H&R", &[Channel::H, Channel::R]),
    ("H&R1&R2", &[Channel::H, Channel::R1, Channel::R2]),
    ("R1&R2", &[Channel::R1, Channel::R2]),
];

pub fn estimate_rates(counts: &ClickCounts, clock_rate_khz: f64) -> Result<RateReport> {
    let n = counts.n_triggers;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let totals = counts.totals();
    let clock_hz = clock_rate_khz * 1e3;
    let fired = |chs: &[Channel]| -> u64 {
        (0..16u8).filter(|&m| chs.iter().all(|c| c.fired(m))).map(|m| totals[m as usize]).sum()
    };
    let channels = REPORTED_CHANNELS
        .iter()
        .map(|(name, chs)| (name.to_string(), Rate::binomial(fired(chs), n, clock_hz)))
        .collect();
    let patterns = (0..16u8).map(|m| (m, Rate::binomial(totals[m as usize], n, clock_hz))).collect();
    Ok(RateReport { n_triggers: n, clock_rate_khz, channels, patterns })
}

/// Per-delay seed-pulse strength from a ring-down run: the monitor click
/// probability `p` is inverted as `−ln((1−p)/(1−d))`.
pub fn ringdown_series(records: &[ClickRecord], dark_prob: f64) -> Result<Vec<SeriesPoint>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut per_delay: BTreeMap<u16, (u64, u64)> = BTreeMap::new();
    for r in records {
        let e = per_delay.entry(r.delay).or_default();
        e.0 += 1;
        if Channel::S.fired(r.mask) {
            e.1 += 1;
        }
    }
    let mut out = Vec::new();
    for (delay, (n, k)) in per_delay {
        let p = k as f64 / n as f64;
        if k == 0 || k == n || p <= dark_prob {
            continue;
        }
        let value = -((1.0 - p) / (1.0 - dark_prob)).ln();
        let stderr = (p * (1.0 - p) / n as f64).sqrt() / (1.0 - p);
        out.push(SeriesPoint { delay: delay as f64, value, stderr: Some(stderr) });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}
