//! Explicit probability vectors over all `2^n` states.

use serde::{Deserialize, Serialize};

use crate::error::{HfmError, Result};
use crate::info;
use crate::state::FeatureState;

/// Memory guard for dense representations.
pub const MAX_DENSE_WIDTH: usize = 20;

/// Tolerance on `sum_s p(s) = 1` accepted by the constructors.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;

/// `p(s)` for every `s in {0,1}^n`, indexed by `sum_i s_i 2^(i-1)`.
///
/// Serialized as `{"n": int, "probs": [float; 2^n]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDense")]
pub struct DenseDistribution {
    n: usize,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDense {
    n: usize,
    probs: Vec<f64>,
}

impl TryFrom<RawDense> for DenseDistribution {
    type Error = HfmError;

    fn try_from(raw: RawDense) -> Result<Self> {
        Self::new(raw.n, raw.probs)
    }
}

pub(crate) fn check_dense_width(n: usize) -> Result<()> {
    if n == 0 {
        return Err(HfmError::param("n", "must be at least 1"));
    }
    if n > MAX_DENSE_WIDTH {
        return Err(HfmError::TooWide {
            n,
            max: MAX_DENSE_WIDTH,
        });
    }
    Ok(())
}

impl DenseDistribution {
    /// Validates width, non-negativity and normalization.
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        check_dense_width(n)?;
        if probs.len() != 1 << n {
            return Err(HfmError::param(
                "probs",
                format!("expected {} entries, found {}", 1usize << n, probs.len()),
            ));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(HfmError::InvalidProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(HfmError::NotNormalized { sum });
        }
        Ok(Self { n, probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(n: usize, mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(HfmError::NotNormalized { sum });
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(n, weights)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        check_dense_width(n)?;
        let size = 1usize << n;
        Ok(Self {
            n,
            probs: vec![1.0 / size as f64; size],
        })
    }

    /// A draw from the flat Dirichlet distribution over the simplex.
    pub fn random_dirichlet<R: rand::Rng>(n: usize, rng: &mut R) -> Result<Self> {
        check_dense_width(n)?;
        let weights = (0..1usize << n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        Self::from_weights(n, weights)
    }

    pub fn point_mass(n: usize, index: usize) -> Result<Self> {
        check_dense_width(n)?;
        let mut probs = vec![0.0; 1 << n];
        if index >= probs.len() {
            return Err(HfmError::param("index", "out of range"));
        }
        probs[index] = 1.0;
        Ok(Self { n, probs })
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, s: &FeatureState) -> Result<f64> {
        s.check_width(self.n)?;
        Ok(self.probs[s.index().expect("dense widths fit in one word") as usize])
    }

    pub fn entropy_bits(&self) -> f64 {
        info::entropy_bits(&self.probs)
    }

    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        self.same_width(other)?;
        Ok(info::total_variation(&self.probs, &other.probs))
    }

    /// `KL(self || other)` in bits.
    pub fn kl_bits(&self, other: &Self) -> Result<f64> {
        self.same_width(other)?;
        Ok(info::kl_bits(&self.probs, &other.probs))
    }

    /// Marginal over the first `k` features `s_{1:k}`.
    pub fn prefix_marginal(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.n {
            return Err(HfmError::param("k", format!("must be in 1..={}", self.n)));
        }
        let mask = (1usize << k) - 1;
        let mut out = vec![0.0; 1 << k];
        for (i, &p) in self.probs.iter().enumerate() {
            out[i & mask] += p;
        }
        Ok(Self { n: k, probs: out })
    }

    /// Marginal over the last `n - k` features `s_{k+1:n}`.
    pub fn suffix_marginal(&self, k: usize) -> Result<Self> {
        if k >= self.n {
            return Err(HfmError::param("k", format!("must be in 0..{}", self.n)));
        }
        let mut out = vec![0.0; 1 << (self.n - k)];
        for (i, &p) in self.probs.iter().enumerate() {
            out[i >> k] += p;
        }
        Ok(Self {
            n: self.n - k,
            probs: out,
        })
    }

    /// `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        self.same_width(other)?;
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        Ok(Self { n: self.n, probs })
    }

    /// `p^beta / Z` with `beta >= 0` chosen by bisection so that the entropy
    /// equals `target_bits` to within `tolerance`. Entropy falls monotonically
    /// from `log2 |support|` at `beta = 0` to `log2 |argmax|` as `beta` grows.
    pub fn tempered_to_entropy(&self, target_bits: f64, tolerance: f64) -> Result<Self> {
        let max = self.probs.iter().copied().fold(0.0, f64::max);
        let logs: Vec<Option<f64>> = self
            .probs
            .iter()
            .map(|&p| (p > 0.0).then(|| (p / max).ln()))
            .collect();
        let temper = |beta: f64| -> Vec<f64> {
            let w: Vec<f64> = logs.iter().map(|l| l.map_or(0.0, |l| (beta * l).exp())).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|x| x / z).collect()
        };
        let h = |beta: f64| info::entropy_bits(&temper(beta));
        let support = logs.iter().flatten().count() as f64;
        let modes = self.probs.iter().filter(|&&p| p == max).count() as f64;
        if !(target_bits <= support.log2() + tolerance && target_bits >= modes.log2() - tolerance) {
            return Err(HfmError::param(
                "target_bits",
                format!("must lie in [{}, {}]", modes.log2(), support.log2()),
            ));
        }
        let mut hi = 1.0;
        while h(hi) > target_bits && hi < 1e12 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let d = h(mid) - target_bits;
            if d.abs() < tolerance {
                return Ok(Self {
                    n: self.n,
                    probs: temper(mid),
                });
            }
            if d > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self {
            n: self.n,
            probs: temper(0.5 * (lo + hi)),
        })
    }

    pub(crate) fn from_parts_unchecked(n: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), 1 << n);
        Self { n, probs }
    }

    fn same_width(&self, other: &Self) -> Result<()> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(HfmError::WidthMismatch {
                expected: self.n,
                found: other.n,
            })
        }
    }
}
