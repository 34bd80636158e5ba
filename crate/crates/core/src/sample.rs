//! Multisets of feature states and their text format.
//!
//! The text format has one state per line written as a 0/1 string with `s_1`
//! first, optionally followed by whitespace and a count. Lines starting with
//! `#` are headers or comments and blank lines are ignored.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::dist::DenseDistribution;
use crate::error::{HfmError, Result};
use crate::info;
use crate::state::FeatureState;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalSample {
    n: usize,
    counts: BTreeMap<FeatureState, u64>,
    total: u64,
}

impl EmpiricalSample {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn from_states<I: IntoIterator<Item = FeatureState>>(n: usize, states: I) -> Result<Self> {
        let mut sample = Self::new(n);
        for s in states {
            sample.push(s)?;
        }
        Ok(sample)
    }

    pub fn from_counts<I: IntoIterator<Item = (FeatureState, u64)>>(n: usize, counts: I) -> Result<Self> {
        let mut sample = Self::new(n);
        for (s, c) in counts {
            sample.add(s, c)?;
        }
        Ok(sample)
    }

    pub fn width(&self) -> usize {
        self.n
    }

    /// Total number of observations.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Number of distinct observed states.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn push(&mut self, s: FeatureState) -> Result<()> {
        self.add(s, 1)
    }

    pub fn add(&mut self, s: FeatureState, count: u64) -> Result<()> {
        s.check_width(self.n)?;
        if count > 0 {
            *self.counts.entry(s).or_insert(0) += count;
            self.total += count;
        }
        Ok(())
    }

    pub fn count(&self, s: &FeatureState) -> u64 {
        self.counts.get(s).copied().unwrap_or(0)
    }

    /// Distinct states in ascending index order with their counts.
    pub fn iter(&self) -> impl Iterator<Item = (&FeatureState, u64)> {
        self.counts.iter().map(|(s, &c)| (s, c))
    }

    /// Maximum-likelihood frequencies of the observed states.
    pub fn frequencies(&self) -> Result<Vec<(FeatureState, f64)>> {
        if self.is_empty() {
            return Err(HfmError::EmptySample);
        }
        let t = self.total as f64;
        Ok(self.iter().map(|(s, c)| (s.clone(), c as f64 / t)).collect())
    }

    /// Relabels every observation through `f`, merging counts of colliding images.
    pub fn map_states<F>(&self, n: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&FeatureState) -> FeatureState,
    {
        let mut out = Self::new(n);
        for (s, c) in self.iter() {
            out.add(f(s), c)?;
        }
        Ok(out)
    }

    /// Sample restricted to the prefix `s_{1:k}`.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.n {
            return Err(HfmError::param("k", format!("must be in 1..={}", self.n)));
        }
        self.map_states(k, |s| s.prefix(k))
    }

    /// Most frequent state; ties go to the smallest state index.
    pub fn mode(&self) -> Option<&FeatureState> {
        let mut best: Option<(&FeatureState, u64)> = None;
        for (s, c) in self.iter() {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((s, c));
            }
        }
        best.map(|(s, _)| s)
    }

    pub fn mean_level(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(HfmError::EmptySample);
        }
        let sum: f64 = self.iter().map(|(s, c)| s.level() as f64 * c as f64).sum();
        Ok(sum / self.total as f64)
    }

    pub fn plugin_entropy_bits(&self) -> f64 {
        info::plugin_entropy_from_counts(self.counts.values().copied())
    }

    pub fn miller_madow_entropy_bits(&self) -> f64 {
        info::miller_madow_from_counts(self.counts.values().copied())
    }

    /// Dense empirical distribution, for `n <= 20`.
    pub fn to_dense(&self) -> Result<DenseDistribution> {
        crate::dist::check_dense_width(self.n)?;
        if self.is_empty() {
            return Err(HfmError::EmptySample);
        }
        let mut probs = vec![0.0; 1 << self.n];
        let t = self.total as f64;
        for (s, c) in self.iter() {
            probs[s.index().unwrap() as usize] += c as f64 / t;
        }
        DenseDistribution::new(self.n, probs)
    }

    /// Union of two samples of the same width.
    pub fn merged(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        for (s, c) in other.iter() {
            out.add(s.clone(), c)?;
        }
        Ok(out)
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# n={} total={} distinct={}", self.n, self.total, self.distinct())?;
        for (s, c) in self.iter() {
            writeln!(out, "{s} {c}")?;
        }
        Ok(())
    }

    /// Parses the text format. The width is taken from the first state unless
    /// `n` is given.
    pub fn read_text<R: BufRead>(input: R, n: Option<usize>) -> Result<Self> {
        let mut sample: Option<Self> = n.map(Self::new);
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| HfmError::Parse {
                line: lineno + 1,
                reason: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let bits = fields.next().unwrap_or_default();
            let state: FeatureState = bits.parse().map_err(|_| HfmError::Parse {
                line: lineno + 1,
                reason: format!("invalid state {bits:?}"),
            })?;
            let count = match fields.next() {
                Some(c) => c.parse::<u64>().map_err(|_| HfmError::Parse {
                    line: lineno + 1,
                    reason: format!("invalid count {c:?}"),
                })?,
                None => 1,
            };
            if fields.next().is_some() {
                return Err(HfmError::Parse {
                    line: lineno + 1,
                    reason: "too many columns".into(),
                });
            }
            let target = sample.get_or_insert_with(|| Self::new(state.width()));
            target.add(state, count).map_err(|e| HfmError::Parse {
                line: lineno + 1,
                reason: e.to_string(),
            })?;
        }
        sample.ok_or(HfmError::EmptySample)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn text_format_with_headers_and_counts() {
        let text = "# layer 5\n0110 3\n1111\n\n0110 2\n";
        let s = EmpiricalSample::read_text(text.as_bytes(), None).unwrap();
        assert_eq!(s.width(), 4);
        assert_eq!(s.total(), 6);
        assert_eq!(s.count(&"0110".parse().unwrap()), 5);
    }

    #[test]
    fn text_format_rejects_mixed_widths() {
        assert!(EmpiricalSample::read_text("01\n011\n".as_bytes(), None).is_err());
        assert!(EmpiricalSample::read_text("01 x\n".as_bytes(), None).is_err());
    }

    #[test]
    fn mode_ties_break_to_smallest_index() {
        let s = EmpiricalSample::from_counts(
            2,
            [("11".parse().unwrap(), 2), ("01".parse().unwrap(), 2)],
        )
        .unwrap();
        assert_eq!(s.mode().unwrap().to_string(), "01");
    }

    proptest! {
        #[test]
        fn text_round_trip(states in prop::collection::vec((0u64..64, 1u64..5), 1..40)) {
            let sample = EmpiricalSample::from_counts(
                6,
                states.into_iter().map(|(i, c)| (FeatureState::from_index(i, 6), c)),
            ).unwrap();
            let mut buf = Vec::new();
            sample.write_text(&mut buf).unwrap();
            let back = EmpiricalSample::read_text(buf.as_slice(), None).unwrap();
            prop_assert_eq!(back, sample);
        }
    }
}
