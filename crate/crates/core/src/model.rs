//! Exact arithmetic for the Hierarchical Feature Model
//! `h_n(s) = exp(-g m_s) / Z_n`, where `m_s` is the highest active feature.
//!
//! `g` is in nats, entropies and coding costs are in bits. The shorthand
//! `xi = 2 exp(-g)` is used throughout; `xi = 1` is the critical point
//! `g = ln 2`.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{check_dense_width, DenseDistribution};
use crate::error::{HfmError, Result};
use crate::info;
use crate::sample::EmpiricalSample;
use crate::state::FeatureState;

/// Critical coupling `g_c = ln 2`.
pub const G_CRITICAL: f64 = LN_2;

/// Below this distance from `xi = 1` the closed forms switch to their limits.
pub const XI_LIMIT_BAND: f64 = 1e-9;

/// Relative tolerance used to bin coding costs when computing the relevance.
pub const RELEVANCE_BIN_TOLERANCE: f64 = 1e-9;

/// `exp(-g m)`, well defined for `g = +inf`.
pub(crate) fn boltzmann(g: f64, m: usize) -> f64 {
    if m == 0 {
        1.0
    } else {
        (-g * m as f64).exp()
    }
}

/// `xi - 1 = 2 exp(-g) - 1`, computed without cancellation.
fn xi_minus_one(g: f64) -> f64 {
    (LN_2 - g).exp_m1()
}

/// `sum_{j<k} xi^j = (xi^k - 1) / (xi - 1)`, with the `xi -> 1` limit handled
/// by direct summation.
pub(crate) fn geometric_sum(g: f64, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let d = xi_minus_one(g);
    if d.abs() < XI_LIMIT_BAND {
        let xi = 1.0 + d;
        let mut acc = 0.0;
        let mut term = 1.0;
        for _ in 0..k {
            acc += term;
            term *= xi;
        }
        acc
    } else {
        (k as f64 * (LN_2 - g)).exp_m1() / d
    }
}

fn check_g(g: f64) -> Result<()> {
    if g > 0.0 {
        Ok(())
    } else {
        Err(HfmError::param("g", format!("must be positive, got {g}")))
    }
}

/// `Z_n = 1 + sum_{k=1..n} 2^(k-1) exp(-g k) = 1 + (xi / 2)(xi^n - 1)/(xi - 1)`.
pub fn hfm_partition(n: usize, g: f64) -> Result<f64> {
    if n == 0 {
        return Err(HfmError::param("n", "must be at least 1"));
    }
    check_g(g)?;
    Ok(partition_unchecked(n, g))
}

fn partition_unchecked(n: usize, g: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let xi = 2.0 * (-g).exp();
    1.0 + 0.5 * xi * geometric_sum(g, n)
}

/// Parameters `(n, g)` of an HFM with its cached partition function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HfmParams {
    n: usize,
    g: f64,
    z: f64,
}

/// One degeneracy level of the HFM: all states with `m_s = level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegeneracyLevel {
    pub level: usize,
    /// Coding cost `E = -log2 h_n(s)` in bits.
    pub coding_cost_bits: f64,
    /// Number of states `W` at this level.
    pub states: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneracySpectrum {
    pub levels: Vec<DegeneracyLevel>,
    /// Least-squares slope of `ln W` against `E` in nats over levels `m >= 1`.
    /// `None` when fewer than two such levels exist.
    pub nu: Option<f64>,
}

impl HfmParams {
    pub fn new(n: usize, g: f64) -> Result<Self> {
        let z = hfm_partition(n, g)?;
        Ok(Self { n, g, z })
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    /// Cached `Z_n`.
    pub fn partition(&self) -> f64 {
        self.z
    }

    pub fn xi(&self) -> f64 {
        2.0 * (-self.g).exp()
    }

    /// Probability of any single state at level `m`.
    pub fn level_state_prob(&self, m: usize) -> f64 {
        boltzmann(self.g, m) / self.z
    }

    /// Number of states with `m_s = m`.
    pub fn level_degeneracy(m: usize) -> f64 {
        if m == 0 {
            1.0
        } else {
            2f64.powi(m as i32 - 1)
        }
    }

    /// `p(m_s = m)`.
    pub fn level_mass(&self, m: usize) -> f64 {
        Self::level_degeneracy(m) * self.level_state_prob(m)
    }

    pub fn prob(&self, s: &FeatureState) -> Result<f64> {
        s.check_width(self.n)?;
        Ok(self.level_state_prob(s.level()))
    }

    /// `ln h_n(s)`.
    pub fn log_prob(&self, s: &FeatureState) -> Result<f64> {
        s.check_width(self.n)?;
        let m = s.level();
        Ok(if m == 0 { 0.0 } else { -self.g * m as f64 } - self.z.ln())
    }

    /// `E[m_s]` under the model.
    pub fn mean_level(&self) -> f64 {
        (1..=self.n).map(|m| m as f64 * self.level_mass(m)).sum()
    }

    /// Resolution `H[s]` in bits, computed level by level in `O(n)`.
    pub fn entropy_bits(&self) -> f64 {
        let ln_z = self.z.ln();
        let mut h = 0.0;
        for m in 0..=self.n {
            let p = self.level_state_prob(m);
            if p > 0.0 {
                let log_p = if m == 0 { 0.0 } else { -self.g * m as f64 } - ln_z;
                h -= Self::level_degeneracy(m) * p * log_p;
            }
        }
        h / LN_2
    }

    /// The full distribution as a dense vector (`n <= 20`).
    pub fn dense(&self) -> Result<DenseDistribution> {
        check_dense_width(self.n)?;
        let probs = (0..1usize << self.n)
            .map(|i| self.level_state_prob(level_of_index(i)))
            .collect();
        Ok(DenseDistribution::from_parts_unchecked(self.n, probs))
    }

    /// Draws `count` states: first the level `m`, then `s_m = 1`, uniform bits
    /// below `m` and zeros above.
    pub fn sample(&self, count: usize, seed: u64) -> EmpiricalSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cdf = Vec::with_capacity(self.n + 1);
        let mut acc = 0.0;
        for m in 0..=self.n {
            acc += self.level_mass(m);
            cdf.push(acc);
        }
        let mut out = EmpiricalSample::new(self.n);
        for _ in 0..count {
            let u: f64 = rng.random::<f64>() * acc;
            let m = cdf.partition_point(|&c| c <= u).min(self.n);
            let mut s = FeatureState::zeros(self.n);
            if m > 0 {
                s.set(m - 1, true);
                for i in 0..m - 1 {
                    if rng.random::<bool>() {
                        s.set(i, true);
                    }
                }
            }
            out.push(s).expect("widths match");
        }
        out
    }

    fn check_split(&self, k: usize) -> Result<()> {
        if k >= 1 && k < self.n {
            Ok(())
        } else {
            Err(HfmError::param("k", format!("must satisfy 1 <= k < n = {}", self.n)))
        }
    }

    /// Mixture weights `(a, b)` of the marginal over the remaining features
    /// `s_{k+1:n}`: `a h_{n-k} + b delta_0`.
    pub fn marginal_low_weights(&self, k: usize) -> Result<(f64, f64)> {
        self.check_split(k)?;
        let xi = self.xi();
        let a = xi.powi(k as i32) * partition_unchecked(self.n - k, self.g) / self.z;
        let b = (1.0 - xi / 2.0) * geometric_sum(self.g, k) / self.z;
        Ok((a, b))
    }

    /// Distribution of `s_{k+1:n}` after summing out the low-order features
    /// `s_{1:k}`: a mixture of `h_{n-k}` and a point mass on the featureless state.
    pub fn marginal_low(&self, k: usize) -> Result<DenseDistribution> {
        let (a, b) = self.marginal_low_weights(k)?;
        let rest = HfmParams::new(self.n - k, self.g)?.dense()?;
        let mut probs: Vec<f64> = rest.probs().iter().map(|p| a * p).collect();
        probs[0] += b;
        Ok(DenseDistribution::from_parts_unchecked(self.n - k, probs))
    }

    /// Weight `Z_k / Z_n` of `h_k` in the marginal over `s_{1:k}`.
    pub fn marginal_high_weight(&self, k: usize) -> Result<f64> {
        self.check_split(k)?;
        Ok(partition_unchecked(k, self.g) / self.z)
    }

    /// Probability of the prefix `s_{1:k}` under the model. `k = n` gives `h_n`.
    pub fn prefix_prob(&self, prefix: &FeatureState) -> Result<f64> {
        let k = prefix.width();
        if k == self.n {
            return self.prob(prefix);
        }
        let w = self.marginal_high_weight(k)?;
        let z_k = partition_unchecked(k, self.g);
        let h_k = boltzmann(self.g, prefix.level()) / z_k;
        Ok(w * h_k + (1.0 - w) * 0.5f64.powi(k as i32))
    }

    /// Distribution of `s_{1:k}`: `(Z_k/Z_n) h_k + (1 - Z_k/Z_n) 2^-k`.
    pub fn marginal_high(&self, k: usize) -> Result<DenseDistribution> {
        let w = self.marginal_high_weight(k)?;
        let h_k = HfmParams::new(k, self.g)?.dense()?;
        let u = 0.5f64.powi(k as i32);
        let probs = h_k.probs().iter().map(|p| w * p + (1.0 - w) * u).collect();
        Ok(DenseDistribution::from_parts_unchecked(k, probs))
    }

    pub fn degeneracy_spectrum(&self) -> DegeneracySpectrum {
        let ln_z = self.z.ln();
        let levels: Vec<DegeneracyLevel> = (0..=self.n)
            .map(|m| DegeneracyLevel {
                level: m,
                coding_cost_bits: (self.g * m as f64 + ln_z) / LN_2,
                states: Self::level_degeneracy(m),
            })
            .collect();
        let points: Vec<(f64, f64)> = levels
            .iter()
            .filter(|l| l.level >= 1 && l.coding_cost_bits.is_finite())
            .map(|l| (l.coding_cost_bits * LN_2, l.states.ln()))
            .collect();
        let nu = least_squares_slope(&points);
        DegeneracySpectrum { levels, nu }
    }
}

pub(crate) fn level_of_index(i: usize) -> usize {
    (usize::BITS - i.leading_zeros()) as usize
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `h_n(s)` for a given state.
pub fn hfm_prob(params: &HfmParams, s: &FeatureState) -> Result<f64> {
    params.prob(s)
}

/// Relevance `H[E]` in bits: the entropy of the coding cost `E_s = -log2 p(s)`.
///
/// States whose coding costs differ by less than [`RELEVANCE_BIN_TOLERANCE`]
/// share a bin; zero-probability states are skipped.
pub fn relevance(dist: &DenseDistribution) -> f64 {
    let mut costs: Vec<(f64, f64)> = dist
        .probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| (-p.log2(), p))
        .collect();
    costs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut masses = Vec::new();
    let mut bin_start = f64::NEG_INFINITY;
    for (e, p) in costs {
        if e - bin_start < RELEVANCE_BIN_TOLERANCE {
            *masses.last_mut().unwrap() += p;
        } else {
            masses.push(p);
            bin_start = e;
        }
    }
    info::entropy_bits(&masses)
}
