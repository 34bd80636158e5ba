//! Bit-packed binary feature configurations.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{HfmError, Result};

/// A configuration `s = (s_1, ..., s_n)` of binary features.
///
/// Bit `i` of the packed words stores `s_{i+1}`; feature 1 is the most
/// coarse-grained one. States order by width first and then by their integer
/// value `sum_i s_i 2^(i-1)`, which is also the dense index used by
/// [`crate::DenseDistribution`].
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FeatureState {
    n: usize,
    words: Vec<u64>,
}

impl FeatureState {
    /// The featureless state `0_{1:n}`.
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            words: vec![0; n.div_ceil(64).max(1)],
        }
    }

    pub fn ones(n: usize) -> Self {
        let mut s = Self::zeros(n);
        for i in 0..n {
            s.set(i, true);
        }
        s
    }

    /// Builds a state from its dense index. Panics if `n > 64`.
    pub fn from_index(index: u64, n: usize) -> Self {
        assert!(n <= 64, "from_index supports n <= 64");
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        Self {
            n,
            words: vec![index & mask],
        }
    }

    /// `bits[0]` is `s_1`. Any non-zero entry counts as an active feature.
    pub fn from_bits<T: Copy + Into<u64>>(bits: &[T]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b.into() != 0 {
                s.set(i, true);
            }
        }
        s
    }

    pub fn width(&self) -> usize {
        self.n
    }

    /// Dense index, available for `n <= 64`.
    pub fn index(&self) -> Option<u64> {
        (self.n <= 64).then(|| self.words[0])
    }

    /// Zero-based access: `bit(0)` is `s_1`.
    pub fn bit(&self, i: usize) -> bool {
        debug_assert!(i < self.n);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.n, "bit {i} out of range for width {}", self.n);
        let w = &mut self.words[i / 64];
        if value {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.n).map(|i| self.bit(i))
    }

    pub fn to_vec(&self) -> Vec<u8> {
        self.bits().map(u8::from).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_featureless(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// `m_s`: the highest active feature index (1-based), 0 for the featureless state.
    pub fn level(&self) -> usize {
        for (wi, &w) in self.words.iter().enumerate().rev() {
            if w != 0 {
                return wi * 64 + (64 - w.leading_zeros() as usize);
            }
        }
        0
    }

    pub fn hamming(&self, other: &Self) -> Result<usize> {
        self.check_width(other.n)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    pub fn complement(&self) -> Self {
        let mut s = self.clone();
        for w in s.words.iter_mut() {
            *w = !*w;
        }
        s.clear_padding();
        s
    }

    /// Keeps the first `k` features `s_{1:k}`.
    pub fn prefix(&self, k: usize) -> Self {
        assert!(k <= self.n);
        let mut s = Self::zeros(k);
        for (i, w) in s.words.iter_mut().enumerate() {
            *w = self.words[i];
        }
        s.clear_padding();
        s
    }

    pub(crate) fn check_width(&self, expected: usize) -> Result<()> {
        if self.n == expected {
            Ok(())
        } else {
            Err(HfmError::WidthMismatch {
                expected,
                found: self.n,
            })
        }
    }

    fn clear_padding(&mut self) {
        let rem = self.n % 64;
        if rem != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << rem) - 1;
        }
        if self.n == 0 {
            self.words[0] = 0;
        }
    }
}

/// `m_s = max{k : s_k = 1}`, with `m = 0` for the featureless state.
pub fn m_of(s: &FeatureState) -> usize {
    s.level()
}

impl Ord for FeatureState {
    fn cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then_with(|| self.words.iter().rev().cmp(other.words.iter().rev()))
    }
}

impl PartialOrd for FeatureState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Written as a 0/1 string with `s_1` first.
impl fmt::Display for FeatureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for FeatureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureState({self})")
    }
}

impl FromStr for FeatureState {
    type Err = HfmError;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(HfmError::Parse {
                line: 0,
                reason: "empty state".into(),
            });
        }
        let mut s = Self::zeros(text.len());
        for (i, c) in text.chars().enumerate() {
            match c {
                '0' => {}
                '1' => s.set(i, true),
                other => {
                    return Err(HfmError::Parse {
                        line: 0,
                        reason: format!("unexpected character {other:?} in state"),
                    })
                }
            }
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(text: &str) -> FeatureState {
        text.parse().unwrap()
    }

    #[test]
    fn level_examples() {
        assert_eq!(m_of(&st("000")), 0);
        assert_eq!(m_of(&st("100")), 1);
        assert_eq!(m_of(&st("101")), 3);
    }

    #[test]
    fn index_convention_puts_s1_in_bit_zero() {
        assert_eq!(st("10").index(), Some(1));
        assert_eq!(st("01").index(), Some(2));
        assert_eq!(FeatureState::from_index(6, 3).to_string(), "011");
    }

    #[test]
    fn wide_states_work_past_one_word() {
        let mut s = FeatureState::zeros(100);
        s.set(99, true);
        assert_eq!(s.level(), 100);
        assert_eq!(s.complement().count_ones(), 99);
        assert_eq!(s.prefix(64), FeatureState::zeros(64));
        assert!(s.index().is_none());
        assert!(FeatureState::zeros(100) < s);
    }

    #[test]
    fn mixed_widths_are_errors() {
        assert!(st("01").hamming(&st("011")).is_err());
        assert_eq!(st("0110").hamming(&st("1100")).unwrap(), 2);
    }

    #[test]
    fn featureless_state_exists_for_every_width() {
        for n in 1..130 {
            let z = FeatureState::zeros(n);
            assert!(z.is_featureless());
            assert_eq!(z.width(), n);
            assert_eq!(z.complement(), FeatureState::ones(n));
        }
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("01a".parse::<FeatureState>().is_err());
        assert!("".parse::<FeatureState>().is_err());
    }
}
