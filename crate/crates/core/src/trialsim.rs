//! Trigger-by-trigger Monte Carlo of the same model the analytic engine
//! evaluates, emitting one [`ClickRecord`] per clock trigger.
//!
//! Triggers are grouped in fixed blocks of [`BLOCK_SIZE`]; block `b` draws
//! from its own ChaCha8 stream `(seed, b)`, so the output does not depend on
//! how many worker threads run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clicks::Detector;
use crate::config::ValidatedConfig;
use crate::error::{Error, Result};
use crate::fock::thermal_pmf;
use crate::model::{routing, Setting};

pub const BLOCK_SIZE: u64 = 1 << 16;
pub const GENERATOR: &str = "ChaCha8Rng/rand_chacha-0.9 stream-per-block";
/// Mean photons reaching the monitor detector from the seed pulse at T = 0
/// in ring-down mode.
pub const DEFAULT_SEED_PHOTONS: f64 = 2.0;

/// One clock trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClickRecord {
    pub trigger: u64,
    pub delay: u16,
    /// Bits H=1, S=2, R1=4, R2=8.
    pub mask: u8,
}

/// What the simulated experiment does on every trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunMode {
    /// Pairs generated, stored and read out at `delay`.
    Readout { delay: u16 },
    /// Controls fire at `delay`, pump off.
    ControlsOnly { delay: u16 },
    /// Pump on, controls off.
    GenerationOnly,
    /// Pump and controls off.
    Dark,
    /// A bright seed pulse leaks from the cavity; trigger `i` samples the
    /// monitor at `delays[i % delays.len()]`.
    Ringdown { delays: Vec<u16>, seed_photons: f64 },
}

impl RunMode {
    pub fn name(&self) -> &'static str {
        match self {
            RunMode::Readout { .. } => "readout",
            RunMode::ControlsOnly { .. } => "controls-only",
            RunMode::GenerationOnly => "generation-only",
            RunMode::Dark => "dark",
            RunMode::Ringdown { .. } => "ringdown",
        }
    }
}

/// Provenance of a click-record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub n_triggers: u64,
    pub clock_rate_khz: f64,
    /// Unix seconds.
    pub created: u64,
    pub generator: String,
    pub block_size: u64,
    pub mode: RunMode,
    pub version: String,
}

impl RunManifest {
    pub fn new(cfg: &ValidatedConfig, seed: u64, n_triggers: u64, mode: RunMode) -> Self {
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            config_hash: cfg.config().hash(),
            seed,
            n_triggers,
            clock_rate_khz: cfg.pulses.clock_rate_khz,
            created,
            generator: GENERATOR.to_owned(),
            block_size: BLOCK_SIZE,
            mode,
            version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }
}

fn cdf(mut pmf: Vec<f64>) -> Vec<f64> {
    let total: f64 = pmf.iter().sum();
    let mut acc = 0.0;
    for p in pmf.iter_mut() {
        acc += *p / total;
        *p = acc;
    }
    if let Some(last) = pmf.last_mut() {
        *last = 1.0;
    }
    pmf
}

fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Per-trigger sampling tables for one delay.
#[derive(Debug, Clone)]
struct PairSampler {
    delay: u16,
    pair_cdf: Vec<f64>,
    noise_cdf: Vec<f64>,
    to_monitor: f64,
    to_output: f64,
    split: f64,
    eta: [f64; 4],
    dark: f64,
}

impl PairSampler {
    fn new(cfg: &ValidatedConfig, delay: u16, setting: Setting) -> Result<Self> {
        let route = routing(cfg, delay.max(1) as u32, setting)?;
        let cutoff = 4 * cfg.fock_cutoff.max(8);
        let mu = if setting.source { cfg.source.mu } else { 0.0 };
        let d = &cfg.detectors;
        Ok(Self {
            delay,
            pair_cdf: cdf(thermal_pmf(mu, cfg.source.schmidt_modes, cutoff)),
            noise_cdf: cdf(thermal_pmf(route.noise_mean, cfg.noise.mode_count_m, cutoff)),
            to_monitor: route.to_monitor,
            to_output: route.to_output,
            split: d.splitter_ratio,
            eta: [d.eta_herald_path, d.eta_s_path, d.eta_r_path, d.eta_r_path],
            dark: d.dark_prob_per_gate,
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u8 {
        let mut mask = 0u8;
        let pairs = draw(&self.pair_cdf, rng.random());
        let mut output = 0usize;
        for _ in 0..pairs {
            if rng.random::<f64>() < self.eta[0] {
                mask |= Detector::H.bit();
            }
            let u: f64 = rng.random();
            if u < self.to_monitor {
                if rng.random::<f64>() < self.eta[1] {
                    mask |= Detector::S.bit();
                }
            } else if u < self.to_monitor + self.to_output {
                output += 1;
            }
        }
        output += draw(&self.noise_cdf, rng.random());
        for _ in 0..output {
            let det = if rng.random::<f64>() < self.split { Detector::R1 } else { Detector::R2 };
            if rng.random::<f64>() < self.eta[2] {
                mask |= det.bit();
            }
        }
        for det in Detector::ALL {
            if rng.random::<f64>() < self.dark {
                mask |= det.bit();
            }
        }
        mask
    }
}

enum Sampler {
    Pairs(PairSampler),
    Ringdown { delays: Vec<u16>, s_click: Vec<f64>, dark: f64 },
}

impl Sampler {
    fn new(cfg: &ValidatedConfig, mode: &RunMode) -> Result<Self> {
        let pairs = |delay: u16, setting| PairSampler::new(cfg, delay, setting).map(Sampler::Pairs);
        match mode {
            RunMode::Readout { delay } => pairs(*delay, Setting::READOUT),
            RunMode::ControlsOnly { delay } => pairs(*delay, Setting::CONTROLS_ONLY),
            RunMode::GenerationOnly => pairs(1, Setting::GENERATION_ONLY),
            RunMode::Dark => pairs(1, Setting::DARK),
            RunMode::Ringdown { delays, seed_photons } => {
                if delays.is_empty() || delays.contains(&0) {
                    return Err(Error::Config("ring-down delays must be a nonempty list of delays ≥ 1".into()));
                }
                if !(seed_photons.is_finite() && *seed_photons > 0.0) {
                    return Err(Error::NonPhysicalParameter(format!("seed photons must be > 0, got {seed_photons}")));
                }
                let s = cfg.derived().ringdown_survival;
                let dark = cfg.detectors.dark_prob_per_gate;
                let s_click = delays
                    .iter()
                    .map(|&t| 1.0 - (1.0 - dark) * (-seed_photons * s.powi(t as i32)).exp())
                    .collect();
                Ok(Sampler::Ringdown { delays: delays.clone(), s_click, dark })
            }
        }
    }

    fn fill_block(&self, seed: u64, block: u64, first: u64, end: u64, out: &mut Vec<ClickRecord>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block);
        for trigger in first..end {
            let (delay, mask) = match self {
                Sampler::Pairs(p) => (p.delay, p.sample(&mut rng)),
                Sampler::Ringdown { delays, s_click, dark } => {
                    let i = (trigger % delays.len() as u64) as usize;
                    let mut mask = 0;
                    for det in Detector::ALL {
                        let p = if det == Detector::S { s_click[i] } else { *dark };
                        if rng.random::<f64>() < p {
                            mask |= det.bit();
                        }
                    }
                    (delays[i], mask)
                }
            };
            out.push(ClickRecord { trigger, delay, mask });
        }
    }
}

/// Blocks simulated concurrently before handing them to the sink.
const BATCH_BLOCKS: u64 = 64;

/// Simulates `n_triggers` and passes the records to `sink` in trigger order,
/// one block at a time, without holding the whole run in memory.
pub fn simulate_with<F>(cfg: &ValidatedConfig, seed: u64, n_triggers: u64, mode: &RunMode, mut sink: F) -> Result<RunManifest>
where
    F: FnMut(&[ClickRecord]) -> Result<()>,
{
    if n_triggers == 0 {
        return Err(Error::Config("n_triggers must be ≥ 1".into()));
    }
    if let RunMode::Readout { delay } | RunMode::ControlsOnly { delay } = mode {
        if *delay == 0 {
            return Err(Error::Config("readout delay must be ≥ 1 cycle".into()));
        }
    }
    let sampler = Sampler::new(cfg, mode)?;
    let n_blocks = n_triggers.div_ceil(BLOCK_SIZE);
    let mut start = 0;
    while start < n_blocks {
        let end = (start + BATCH_BLOCKS).min(n_blocks);
        let blocks: Vec<Vec<ClickRecord>> = (start..end)
            .into_par_iter()
            .map(|b| {
                let first = b * BLOCK_SIZE;
                let last = (first + BLOCK_SIZE).min(n_triggers);
                let mut out = Vec::with_capacity((last - first) as usize);
                sampler.fill_block(seed, b, first, last, &mut out);
                out
            })
            .collect();
        for block in &blocks {
            sink(block)?;
        }
        start = end;
    }
    Ok(RunManifest::new(cfg, seed, n_triggers, mode.clone()))
}

/// Full record stream of a run held in memory.
pub fn simulate(cfg: &ValidatedConfig, seed: u64, n_triggers: u64, mode: &RunMode) -> Result<(Vec<ClickRecord>, RunManifest)> {
    let mut records = Vec::with_capacity(n_triggers.min(1 << 26) as usize);
    let manifest = simulate_with(cfg, seed, n_triggers, mode, |b| {
        records.extend_from_slice(b);
        Ok(())
    })?;
    Ok((records, manifest))
}

/// Readout run at delay `delay`.
pub fn simulate_run(cfg: &ValidatedConfig, seed: u64, n_triggers: u64, delay: u16) -> Result<(Vec<ClickRecord>, RunManifest)> {
    simulate(cfg, seed, n_triggers, &RunMode::Readout { delay })
}

/// Controls fire at delay 1 with the pump off.
pub fn simulate_controls_only(cfg: &ValidatedConfig, seed: u64, n_triggers: u64) -> Result<(Vec<ClickRecord>, RunManifest)> {
    simulate(cfg, seed, n_triggers, &RunMode::ControlsOnly { delay: 1 })
}

/// Ring-down of a seeded pulse sampled at each of `delays` in turn.
pub fn simulate_ringdown(
    cfg: &ValidatedConfig,
    seed: u64,
    n_triggers: u64,
    delays: &[u16],
) -> Result<(Vec<ClickRecord>, RunManifest)> {
    simulate(cfg, seed, n_triggers, &RunMode::Ringdown { delays: delays.to_vec(), seed_photons: DEFAULT_SEED_PHOTONS })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn quiet() -> ValidatedConfig {
        let mut c = presets::primary();
        c.source.mu = 0.0;
        c.noise.noise_mean_per_nj = 0.0;
        c.detectors.dark_prob_per_gate = 0.0;
        c.validate().unwrap()
    }

    #[test]
    fn nothing_on_gives_empty_masks() {
        let (recs, m) = simulate_run(&quiet(), 3, 100_000, 1).unwrap();
        assert_eq!(m.n_triggers, 100_000);
        assert!(recs.iter().all(|r| r.mask == 0 && r.delay == 1));
        assert!(recs.windows(2).all(|w| w[1].trigger == w[0].trigger + 1));
    }

    #[test]
    fn same_seed_same_stream_different_seed_differs() {
        let cfg = presets::primary().validate().unwrap();
        let a = simulate_run(&cfg, 9, 200_000, 1).unwrap().0;
        let b = simulate_run(&cfg, 9, 200_000, 1).unwrap().0;
        let c = simulate_run(&cfg, 10, 200_000, 1).unwrap().0;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn prefix_is_stable_across_lengths() {
        let cfg = presets::primary().validate().unwrap();
        let short = simulate_run(&cfg, 5, 70_000, 1).unwrap().0;
        let long = simulate_run(&cfg, 5, 300_000, 1).unwrap().0;
        assert_eq!(short[..], long[..70_000]);
    }

    #[test]
    fn zero_delay_rejected() {
        let cfg = presets::primary().validate().unwrap();
        assert!(simulate_run(&cfg, 1, 10, 0).is_err());
        assert!(simulate_ringdown(&cfg, 1, 10, &[]).is_err());
    }

    #[test]
    fn ringdown_cycles_through_delays() {
        let cfg = presets::primary().validate().unwrap();
        let (recs, _) = simulate_ringdown(&cfg, 1, 9, &[1, 50, 100]).unwrap();
        let ds: Vec<u16> = recs.iter().map(|r| r.delay).collect();
        assert_eq!(ds, vec![1, 50, 100, 1, 50, 100, 1, 50, 100]);
    }
}
