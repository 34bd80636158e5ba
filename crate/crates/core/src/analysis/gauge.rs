use serde::{Deserialize, Serialize};

use crate::dist::DenseDistribution;
use crate::error::{HfmError, Result};
use crate::sample::EmpiricalSample;
use crate::state::FeatureState;

/// Relabelling `s'_i = s_{pi(i)}` if `tau_{pi(i)} = 1`, else `1 - s_{pi(i)}`.
///
/// `tau[k] == true` keeps feature `k`, `false` flips it. `pi` is stored
/// 0-based; the JSON form writes it 1-based and `tau` as 0/1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGauge", into = "RawGauge")]
pub struct GaugePerm {
    tau: Vec<bool>,
    pi: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawGauge {
    tau: Vec<u8>,
    pi: Vec<usize>,
}

impl TryFrom<RawGauge> for GaugePerm {
    type Error = HfmError;

    fn try_from(raw: RawGauge) -> Result<Self> {
        if raw.pi.contains(&0) {
            return Err(HfmError::param("pi", "entries are 1-based"));
        }
        let tau = raw
            .tau
            .iter()
            .map(|&t| match t {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(HfmError::param("tau", "entries must be 0 or 1")),
            })
            .collect::<Result<_>>()?;
        Self::new(tau, raw.pi.iter().map(|p| p - 1).collect())
    }
}

impl From<GaugePerm> for RawGauge {
    fn from(g: GaugePerm) -> Self {
        RawGauge {
            tau: g.tau.iter().map(|&t| t as u8).collect(),
            pi: g.pi.iter().map(|p| p + 1).collect(),
        }
    }
}

impl GaugePerm {
    pub fn new(tau: Vec<bool>, pi: Vec<usize>) -> Result<Self> {
        if tau.len() != pi.len() {
            return Err(HfmError::WidthMismatch {
                expected: tau.len(),
                found: pi.len(),
            });
        }
        let mut seen = vec![false; pi.len()];
        for &p in &pi {
            if p >= pi.len() || seen[p] {
                return Err(HfmError::param("pi", "not a permutation"));
            }
            seen[p] = true;
        }
        Ok(Self { tau, pi })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            tau: vec![true; n],
            pi: (0..n).collect(),
        }
    }

    /// Pure bit flips with the identity permutation.
    pub fn flips(tau: Vec<bool>) -> Self {
        let n = tau.len();
        Self { tau, pi: (0..n).collect() }
    }

    /// Pure permutation without flips.
    pub fn permutation(pi: Vec<usize>) -> Result<Self> {
        Self::new(vec![true; pi.len()], pi)
    }

    pub fn width(&self) -> usize {
        self.pi.len()
    }

    pub fn tau(&self) -> &[bool] {
        &self.tau
    }

    /// 0-based permutation.
    pub fn pi(&self) -> &[usize] {
        &self.pi
    }

    pub fn is_identity(&self) -> bool {
        self.tau.iter().all(|&t| t) && self.pi.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn apply(&self, s: &FeatureState) -> Result<FeatureState> {
        s.check_width(self.width())?;
        let mut out = FeatureState::zeros(self.width());
        for (i, &p) in self.pi.iter().enumerate() {
            out.set(i, s.bit(p) == self.tau[p]);
        }
        Ok(out)
    }

    pub fn apply_sample(&self, sample: &EmpiricalSample) -> Result<EmpiricalSample> {
        if sample.width() != self.width() {
            return Err(HfmError::WidthMismatch {
                expected: self.width(),
                found: sample.width(),
            });
        }
        sample.map_states(self.width(), |s| self.apply(s).expect("width checked"))
    }

    /// Pushes a dense distribution through the relabelling.
    pub fn apply_dense(&self, p: &DenseDistribution) -> Result<DenseDistribution> {
        if p.width() != self.width() {
            return Err(HfmError::WidthMismatch {
                expected: self.width(),
                found: p.width(),
            });
        }
        let n = self.width();
        let mut out = vec![0.0; p.len()];
        for (i, &v) in p.probs().iter().enumerate() {
            let s = FeatureState::from_index(i as u64, n);
            let j = self.apply(&s)?.index().expect("dense widths fit in one word") as usize;
            out[j] = v;
        }
        Ok(DenseDistribution::from_parts_unchecked(n, out))
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.width()];
        for (i, &p) in self.pi.iter().enumerate() {
            inv[p] = i;
        }
        let tau = (0..self.width()).map(|k| self.tau[self.pi[k]]).collect();
        Self { tau, pi: inv }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Self) -> Result<Self> {
        if self.width() != first.width() {
            return Err(HfmError::WidthMismatch {
                expected: first.width(),
                found: self.width(),
            });
        }
        let n = self.width();
        let pi: Vec<usize> = (0..n).map(|i| first.pi[self.pi[i]]).collect();
        let mut tau = vec![true; n];
        for i in 0..n {
            let j = self.pi[i];
            tau[pi[i]] = first.tau[first.pi[j]] == self.tau[j];
        }
        Ok(Self { tau, pi })
    }
}

/// Flips every feature that is active in the most frequent state, so the
/// relabelled sample has the featureless state as its mode.
pub fn gauge_fix(sample: &EmpiricalSample) -> Result<(GaugePerm, EmpiricalSample)> {
    let mode = sample.mode().ok_or(HfmError::EmptySample)?;
    let gauge = GaugePerm::flips(mode.bits().map(|b| !b).collect());
    let fixed = gauge.apply_sample(sample)?;
    Ok((gauge, fixed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(bits: &str) -> FeatureState {
        bits.parse().unwrap()
    }

    #[test]
    fn gauge_fix_moves_mode_to_zero() {
        let sample = EmpiricalSample::from_counts(4, [(st("0110"), 5), (st("1111"), 2), (st("0000"), 1)]).unwrap();
        let (g, fixed) = gauge_fix(&sample).unwrap();
        assert_eq!(g.tau(), &[true, false, false, true]);
        assert_eq!(fixed.mode().unwrap(), &st("0000"));
        assert_eq!(g.apply_sample(&fixed).unwrap(), sample);
    }

    #[test]
    fn gauge_fix_on_zero_mode_is_identity() {
        let sample = EmpiricalSample::from_counts(3, [(st("000"), 3), (st("100"), 1)]).unwrap();
        let (g, fixed) = gauge_fix(&sample).unwrap();
        assert!(g.is_identity());
        assert_eq!(fixed, sample);
    }

    #[test]
    fn apply_matches_definition() {
        // s'_1 = s_3, s'_2 = 1 - s_1, s'_3 = s_2
        let g = GaugePerm::new(vec![false, true, true], vec![2, 0, 1]).unwrap();
        assert_eq!(g.apply(&st("100")).unwrap(), st("000"));
        assert_eq!(g.apply(&st("001")).unwrap(), st("110"));
        assert_eq!(g.apply(&st("010")).unwrap(), st("011"));
    }

    #[test]
    fn compose_matches_sequential_application() {
        let a = GaugePerm::new(vec![false, true, true, false], vec![2, 0, 3, 1]).unwrap();
        let b = GaugePerm::new(vec![true, false, true, false], vec![1, 3, 0, 2]).unwrap();
        let ab = b.compose(&a).unwrap();
        for i in 0..16 {
            let s = FeatureState::from_index(i, 4);
            assert_eq!(ab.apply(&s).unwrap(), b.apply(&a.apply(&s).unwrap()).unwrap());
        }
    }

    #[test]
    fn json_is_one_based() {
        let g = GaugePerm::new(vec![false, true], vec![1, 0]).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(text, r#"{"tau":[0,1],"pi":[2,1]}"#);
        assert_eq!(serde_json::from_str::<GaugePerm>(&text).unwrap(), g);
        assert!(serde_json::from_str::<GaugePerm>(r#"{"tau":[1,1],"pi":[1,1]}"#).is_err());
    }
}
