//! Threshold-detector outcomes for the four detectors and the correlation
//! functions built from them.
//!
//! The same table type holds exact model probabilities and empirical
//! frequencies from click records, so every estimator here is literally the
//! ratio-of-frequencies form of the analytic definition.

use serde::{Deserialize, Serialize};

use crate::config::DetectorParams;
use crate::error::{Error, Result};
use crate::fock::PhotonNumberDistribution;

/// Detector bit in a click mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    H,
    S,
    R1,
    R2,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::H, Detector::S, Detector::R1, Detector::R2];

    pub const fn bit(self) -> u8 {
        match self {
            Detector::H => 1,
            Detector::S => 2,
            Detector::R1 => 4,
            Detector::R2 => 8,
        }
    }

    /// Mode label the detector reads in a [`PhotonNumberDistribution`].
    pub const fn mode(self) -> &'static str {
        match self {
            Detector::H => "h",
            Detector::S => "s",
            Detector::R1 => "r1",
            Detector::R2 => "r2",
        }
    }
}

/// A named event over a click mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    H,
    S,
    R1,
    R2,
    /// Either output detector.
    R,
}

impl Channel {
    pub fn fired(self, mask: u8) -> bool {
        match self {
            Channel::H => mask & Detector::H.bit() != 0,
            Channel::S => mask & Detector::S.bit() != 0,
            Channel::R1 => mask & Detector::R1.bit() != 0,
            Channel::R2 => mask & Detector::R2.bit() != 0,
            Channel::R => mask & (Detector::R1.bit() | Detector::R2.bit()) != 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::H => "H",
            Channel::S => "S",
            Channel::R1 => "R1",
            Channel::R2 => "R2",
            Channel::R => "R",
        }
    }
}

/// Probability of every exclusive click pattern, indexed by mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickProbabilities {
    pub patterns: [f64; 16],
}

impl ClickProbabilities {
    /// Empirical pattern frequencies.
    pub fn from_counts(counts: &[u64; 16]) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let mut patterns = [0.0; 16];
        for (p, &c) in patterns.iter_mut().zip(counts) {
            *p = c as f64 / n as f64;
        }
        Ok(Self { patterns })
    }

    /// Probability that every channel in `channels` fires.
    pub fn joint(&self, channels: &[Channel]) -> f64 {
        self.patterns
            .iter()
            .enumerate()
            .filter(|(m, _)| channels.iter().all(|c| c.fired(*m as u8)))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn single(&self, channel: Channel) -> f64 {
        self.joint(&[channel])
    }

    pub fn total(&self) -> f64 {
        self.patterns.iter().sum()
    }
}

/// Threshold detection of modes `h`, `s`, `r1`, `r2` with the configured
/// efficiencies and dark-count probability. Missing modes count as vacuum.
///
/// A detector with efficiency η and dark probability d clicks with
/// probability `1 − (1−d)·Σ P(n)(1−η)ⁿ`.
pub fn detect(dist: &PhotonNumberDistribution, params: &DetectorParams) -> ClickProbabilities {
    let eta = |d: Detector| match d {
        Detector::H => params.eta_herald_path,
        Detector::S => params.eta_s_path,
        Detector::R1 | Detector::R2 => params.eta_r_path,
    };
    detect_with(dist, |d| (eta(d), params.dark_prob_per_gate))
}

/// Threshold detection with per-detector `(efficiency, dark probability)`.
pub fn detect_with(
    dist: &PhotonNumberDistribution,
    response: impl Fn(Detector) -> (f64, f64),
) -> ClickProbabilities {
    let n_max = dist.n_max();
    // per detector: mode index (if present) and (1−η)^n table
    let dets: Vec<(Option<usize>, Vec<f64>, f64)> = Detector::ALL
        .iter()
        .map(|&d| {
            let (eta, dark) = response(d);
            let miss: Vec<f64> = (0..=n_max).map(|n| (1.0 - eta).powi(n as i32)).collect();
            (dist.mode_index(d.mode()).ok(), miss, 1.0 - dark)
        })
        .collect();

    // no_click[A] = P(no detector in A clicks)
    let mut no_click = [0.0f64; 16];
    for (flat, &p) in dist.probabilities().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let ns = dist.numbers(flat);
        let miss: Vec<f64> = dets
            .iter()
            .map(|(idx, table, _)| idx.map_or(1.0, |i| table[ns[i]]))
            .collect();
        for (set, slot) in no_click.iter_mut().enumerate() {
            let mut w = p;
            for (k, m) in miss.iter().enumerate() {
                if set & (1 << k) != 0 {
                    w *= m;
                }
            }
            *slot += w;
        }
    }
    for (set, slot) in no_click.iter_mut().enumerate() {
        for (k, (_, _, keep)) in dets.iter().enumerate() {
            if set & (1 << k) != 0 {
                *slot *= keep;
            }
        }
    }

    // P(exactly C) = Σ_{B ⊆ C} (−1)^{|B|} no_click[¬C ∪ B]
    let mut patterns = [0.0f64; 16];
    for (c, slot) in patterns.iter_mut().enumerate() {
        let not_c = !c & 0xF;
        let mut b = c;
        loop {
            let sign = if b.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            *slot += sign * no_click[not_c | b];
            if b == 0 {
                break;
            }
            b = (b - 1) & c;
        }
        *slot = slot.max(0.0);
    }
    ClickProbabilities { patterns }
}

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den <= 0.0 {
        return Err(Error::DivisionByZeroRate(what.to_owned()));
    }
    Ok(num / den)
}

/// `p(A∧B) / (p(A) p(B))`.
pub fn g2_cross(p: &ClickProbabilities, a: Channel, b: Channel) -> Result<f64> {
    ratio(
        p.joint(&[a, b]),
        p.single(a) * p.single(b),
        &format!("p({})·p({})", a.name(), b.name()),
    )
}

/// `p(H∧R1∧R2)·p(H) / (p(H∧R1)·p(H∧R2))`.
pub fn g2_heralded_auto(p: &ClickProbabilities) -> Result<f64> {
    ratio(
        p.joint(&[Channel::H, Channel::R1, Channel::R2]) * p.single(Channel::H),
        p.joint(&[Channel::H, Channel::R1]) * p.joint(&[Channel::H, Channel::R2]),
        "p(H∧R1)·p(H∧R2)",
    )
}

/// `p(R1∧R2) / (p(R1) p(R2))`.
pub fn g2_unheralded_auto(p: &ClickProbabilities) -> Result<f64> {
    g2_cross(p, Channel::R1, Channel::R2)
}

/// `p(R|H)`.
pub fn heralding_probability(p: &ClickProbabilities) -> Result<f64> {
    ratio(p.joint(&[Channel::H, Channel::R]), p.single(Channel::H), "p(H)")
}

/// Heralding efficiency with the background `R` probability removed.
pub fn heralding_efficiency_subtracted(p: &ClickProbabilities, background: &ClickProbabilities) -> Result<f64> {
    Ok(heralding_probability(p)? - background.single(Channel::R))
}

/// Klyshko herald efficiency `p(H∧S) / p(S)`.
pub fn klyshko(p: &ClickProbabilities) -> Result<f64> {
    ratio(p.joint(&[Channel::H, Channel::S]), p.single(Channel::S), "p(S)")
}

/// Cross-correlation after removing accidentals that involve a background
/// event: with `p̃ = p − b` for singles, the coincidence is reduced by
/// `p(A)p(B) − p̃(A)p̃(B)`.
pub fn g2_cross_subtracted(
    p: &ClickProbabilities,
    background: &ClickProbabilities,
    a: Channel,
    b: Channel,
) -> Result<f64> {
    let (pa, pb) = (p.single(a), p.single(b));
    let (sa, sb) = (pa - background.single(a), pb - background.single(b));
    let coincidence = p.joint(&[a, b]) - (pa * pb - sa * sb);
    ratio(coincidence, sa * sb, &format!("background-subtracted p({})·p({})", a.name(), b.name()))
}

/// Second-order coherence of an incoherent mixture of two independent
/// fields with means `n_a`, `n_b` and coherences `g2_a`, `g2_b`.
pub fn g2_mixture(g2_a: f64, n_a: f64, g2_b: f64, n_b: f64) -> Result<f64> {
    if n_a < 0.0 || n_b < 0.0 {
        return Err(Error::NonPhysicalParameter("mixture means must be >= 0".into()));
    }
    let total = n_a + n_b;
    ratio(
        g2_a * n_a * n_a + g2_b * n_b * n_b + 2.0 * n_a * n_b,
        total * total,
        "n_a + n_b",
    )
}
