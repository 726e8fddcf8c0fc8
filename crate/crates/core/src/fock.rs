//! Truncated photon-number distributions over named modes.
//!
//! A [`PhotonNumberDistribution`] is a dense joint probability table over
//! photon numbers `0..=n_max` in each mode. Loss is binomial thinning,
//! noise is convolution with a multimode thermal (negative binomial)
//! distribution and beam splitting is a binomial partition into two new
//! modes. Mass pushed above `n_max` is tracked as leakage.

use crate::error::{Error, Result};

/// Leakage at or above this is a [`Error::TruncationTooTight`].
pub const MAX_LEAKAGE: f64 = 1e-6;

/// Probability mass function of an `m`-mode thermal distribution with total
/// mean `mean` (negative binomial with shape `m`), for `n = 0..=n_max`.
///
/// `m = 1` is the geometric (single-mode thermal) law `μⁿ/(1+μ)^{n+1}`.
pub fn thermal_pmf(mean: f64, modes: f64, n_max: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; n_max + 1];
    if mean <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    let per_mode = mean / modes;
    let q = per_mode / (1.0 + per_mode);
    pmf[0] = (-modes * per_mode.ln_1p()).exp();
    for n in 0..n_max {
        pmf[n + 1] = pmf[n] * (n as f64 + modes) / (n as f64 + 1.0) * q;
    }
    pmf
}

/// Binomial kernel row: `P(k | n) = C(n,k) ηᵏ (1−η)^{n−k}` for `k = 0..=n`.
pub fn binomial_row(n: usize, eta: f64) -> Vec<f64> {
    let mut row = vec![0.0; n + 1];
    if eta <= 0.0 {
        row[0] = 1.0;
        return row;
    }
    if eta >= 1.0 {
        row[n] = 1.0;
        return row;
    }
    let mut c = 1.0;
    for (k, slot) in row.iter_mut().enumerate() {
        *slot = c * eta.powi(k as i32) * (1.0 - eta).powi((n - k) as i32);
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    row
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDistribution {
    labels: Vec<String>,
    n_max: usize,
    probs: Vec<f64>,
    leakage: f64,
}

impl PhotonNumberDistribution {
    /// All modes empty.
    pub fn vacuum<S: AsRef<str>>(labels: &[S], n_max: usize) -> Self {
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_owned()).collect();
        let mut probs = vec![0.0; (n_max + 1).pow(labels.len() as u32)];
        probs[0] = 1.0;
        Self { labels, n_max, probs, leakage: 0.0 }
    }

    /// Builds a distribution from an explicit table (last mode fastest).
    pub fn from_table<S: AsRef<str>>(labels: &[S], n_max: usize, probs: Vec<f64>) -> Result<Self> {
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_owned()).collect();
        let expected = (n_max + 1).pow(labels.len() as u32);
        if probs.len() != expected {
            return Err(Error::Format(format!("table has {} entries, expected {expected}", probs.len())));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::NonPhysicalParameter("negative probability in table".into()));
        }
        Ok(Self { labels, n_max, probs, leakage: 0.0 })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Probability mass that fell above `n_max` and was renormalized away.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mode_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownMode(label.to_owned()))
    }

    fn dim(&self) -> usize {
        self.n_max + 1
    }

    fn stride(&self, mode: usize) -> usize {
        self.dim().pow((self.labels.len() - 1 - mode) as u32)
    }

    /// Photon numbers of every mode for a flat table index.
    pub fn numbers(&self, mut flat: usize) -> Vec<usize> {
        let d = self.dim();
        let mut out = vec![0; self.labels.len()];
        for slot in out.iter_mut().rev() {
            *slot = flat % d;
            flat /= d;
        }
        out
    }

    /// Probability of the given photon numbers (one per mode, label order).
    pub fn prob(&self, numbers: &[usize]) -> f64 {
        let flat = numbers.iter().fold(0, |acc, &n| acc * self.dim() + n);
        self.probs[flat]
    }

    pub fn marginal(&self, label: &str) -> Result<Vec<f64>> {
        let m = self.mode_index(label)?;
        let (d, stride) = (self.dim(), self.stride(m));
        let mut out = vec![0.0; d];
        for (flat, &p) in self.probs.iter().enumerate() {
            out[(flat / stride) % d] += p;
        }
        Ok(out)
    }

    pub fn mean(&self, label: &str) -> Result<f64> {
        Ok(self.marginal(label)?.iter().enumerate().map(|(n, p)| n as f64 * p).sum())
    }

    /// `⟨n_a n_b⟩` for two distinct modes.
    pub fn mean_product(&self, a: &str, b: &str) -> Result<f64> {
        let (ia, ib) = (self.mode_index(a)?, self.mode_index(b)?);
        let (d, sa, sb) = (self.dim(), self.stride(ia), self.stride(ib));
        Ok(self
            .probs
            .iter()
            .enumerate()
            .map(|(flat, &p)| ((flat / sa) % d) as f64 * ((flat / sb) % d) as f64 * p)
            .sum())
    }

    /// Photon-number cross-correlation `⟨n_a n_b⟩ / (⟨n_a⟩⟨n_b⟩)`.
    pub fn g2_cross(&self, a: &str, b: &str) -> Result<f64> {
        let (ma, mb) = (self.mean(a)?, self.mean(b)?);
        if ma == 0.0 || mb == 0.0 {
            return Err(Error::DivisionByZeroRate(format!("mean photon number of {a} or {b} is zero")));
        }
        Ok(self.mean_product(a, b)? / (ma * mb))
    }

    /// Photon-number auto-correlation `⟨n(n−1)⟩ / ⟨n⟩²`.
    pub fn g2_auto(&self, label: &str) -> Result<f64> {
        let pmf = self.marginal(label)?;
        let mean: f64 = pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        if mean == 0.0 {
            return Err(Error::DivisionByZeroRate(format!("mean photon number of {label} is zero")));
        }
        let fact2: f64 = pmf.iter().enumerate().map(|(n, p)| (n * n.saturating_sub(1)) as f64 * p).sum();
        Ok(fact2 / (mean * mean))
    }

    /// Applies a column-stochastic kernel `n → k` to one mode. Mass mapped
    /// above `n_max` is dropped; returns the dropped mass.
    fn map_mode(&mut self, mode: usize, kernel: &[Vec<f64>]) -> f64 {
        let (d, stride) = (self.dim(), self.stride(mode));
        let mut out = vec![0.0; self.probs.len()];
        for (flat, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let n = (flat / stride) % d;
            let base = flat - n * stride;
            for (k, &w) in kernel[n].iter().enumerate().take(d) {
                out[base + k * stride] += p * w;
            }
        }
        let before: f64 = self.probs.iter().sum();
        self.probs = out;
        (before - self.probs.iter().sum::<f64>()).max(0.0)
    }

    /// Binomial thinning of one mode by transmission `eta`.
    pub fn apply_loss(mut self, label: &str, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::NonPhysicalParameter(format!("transmission must be in [0, 1], got {eta}")));
        }
        let mode = self.mode_index(label)?;
        if eta == 1.0 {
            return Ok(self);
        }
        let kernel: Vec<Vec<f64>> = (0..self.dim()).map(|n| binomial_row(n, eta)).collect();
        self.map_mode(mode, &kernel);
        Ok(self)
    }

    /// Adds independent `m`-mode thermal photons with total mean `n_bar`.
    pub fn add_thermal_noise(mut self, label: &str, n_bar: f64, modes: f64) -> Result<Self> {
        if !(n_bar >= 0.0) || !n_bar.is_finite() {
            return Err(Error::NonPhysicalParameter(format!("noise mean must be >= 0, got {n_bar}")));
        }
        if !(modes >= 1.0) || !modes.is_finite() {
            return Err(Error::NonPhysicalParameter(format!("thermal mode count must be >= 1, got {modes}")));
        }
        let mode = self.mode_index(label)?;
        if n_bar == 0.0 {
            return Ok(self);
        }
        let d = self.dim();
        let pmf = thermal_pmf(n_bar, modes, self.n_max);
        let kernel: Vec<Vec<f64>> = (0..d)
            .map(|n| {
                let mut row = vec![0.0; d];
                for k in n..d {
                    row[k] = pmf[k - n];
                }
                row
            })
            .collect();
        let before = self.total();
        let dropped = self.map_mode(mode, &kernel);
        let leak = if before > 0.0 { dropped / before } else { 0.0 };
        self.absorb_leakage(leak)?;
        Ok(self)
    }

    fn absorb_leakage(&mut self, leak: f64) -> Result<()> {
        self.leakage += leak;
        if self.leakage >= MAX_LEAKAGE {
            return Err(Error::TruncationTooTight { leakage: self.leakage, n_max: self.n_max });
        }
        let total = self.total();
        if total > 0.0 {
            self.probs.iter_mut().for_each(|p| *p /= total);
        }
        Ok(())
    }

    /// Binomial partition of one mode into two new modes: each photon goes
    /// to `into.0` with probability `ratio`, otherwise to `into.1`. The two
    /// new modes take the original mode's position in the label order.
    pub fn split(&self, label: &str, into: (&str, &str), ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::NonPhysicalParameter(format!("split ratio must be in [0, 1], got {ratio}")));
        }
        let mode = self.mode_index(label)?;
        let mut labels = self.labels.clone();
        labels.splice(mode..=mode, [into.0.to_owned(), into.1.to_owned()]);
        let mut out = Self::vacuum(&labels, self.n_max);
        out.probs.iter_mut().for_each(|p| *p = 0.0);
        out.leakage = self.leakage;
        let d = self.dim();
        let rows: Vec<Vec<f64>> = (0..d).map(|n| binomial_row(n, ratio)).collect();
        for (flat, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut ns = self.numbers(flat);
            let n = ns[mode];
            ns.insert(mode + 1, 0);
            for (a, &w) in rows[n].iter().enumerate() {
                ns[mode] = a;
                ns[mode + 1] = n - a;
                let idx = ns.iter().fold(0, |acc, &x| acc * d + x);
                out.probs[idx] += p * w;
            }
        }
        Ok(out)
    }

    pub fn rename(mut self, from: &str, to: &str) -> Result<Self> {
        let m = self.mode_index(from)?;
        self.labels[m] = to.to_owned();
        Ok(self)
    }

    /// Appends an empty mode.
    pub fn with_vacuum_mode(&self, label: &str) -> Self {
        let mut labels = self.labels.clone();
        labels.push(label.to_owned());
        let d = self.dim();
        let mut out = Self::vacuum(&labels, self.n_max);
        out.probs.iter_mut().for_each(|p| *p = 0.0);
        for (flat, &p) in self.probs.iter().enumerate() {
            out.probs[flat * d] = p;
        }
        out.leakage = self.leakage;
        out
    }
}

/// Pair state of `schmidt_modes` independent two-mode squeezers sharing a
/// mean pair number `mu`, over modes `h` (herald) and `s` (signal).
///
/// Photon numbers in the two modes are always equal; the pair-number law is
/// thermal with `schmidt_modes` modes.
pub fn tmsv_state(mu: f64, schmidt_modes: f64, n_max: usize) -> Result<PhotonNumberDistribution> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::NonPhysicalParameter(format!("mean pair number must be >= 0, got {mu}")));
    }
    if !(schmidt_modes >= 1.0) || !schmidt_modes.is_finite() {
        return Err(Error::NonPhysicalParameter(format!("schmidt_modes must be >= 1, got {schmidt_modes}")));
    }
    let pmf = thermal_pmf(mu, schmidt_modes, n_max);
    let kept: f64 = pmf.iter().sum();
    let leakage = (1.0 - kept).max(0.0);
    if leakage >= MAX_LEAKAGE {
        return Err(Error::TruncationTooTight { leakage, n_max });
    }
    let mut dist = PhotonNumberDistribution::vacuum(&["h", "s"], n_max);
    dist.probs[0] = 0.0;
    let d = n_max + 1;
    for (n, p) in pmf.iter().enumerate() {
        dist.probs[n * d + n] = p / kept;
    }
    dist.leakage = leakage;
    Ok(dist)
}
