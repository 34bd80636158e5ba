use std::f64::consts::LN_2;

use log::warn;
use serde::{Deserialize, Serialize};

use super::gauge::GaugePerm;
use crate::error::{HfmError, Result};
use crate::model::HfmParams;
use crate::sample::EmpiricalSample;

/// Lower end of the `g` search range.
pub const G_FIT_MIN: f64 = 1e-3;
/// Upper end of the `g` search range; returned for degenerate samples.
pub const G_FIT_MAX: f64 = 20.0;

const EXHAUSTIVE_MAX_WIDTH: usize = 8;

/// `KL(sample || h_n)` in bits with the plug-in estimate of the sample.
pub fn hfm_kl_bits(sample: &EmpiricalSample, params: &HfmParams) -> Result<f64> {
    if sample.is_empty() {
        return Err(HfmError::EmptySample);
    }
    if sample.width() != params.width() {
        return Err(HfmError::WidthMismatch {
            expected: params.width(),
            found: sample.width(),
        });
    }
    let t = sample.total() as f64;
    let mut kl = 0.0;
    for (s, c) in sample.iter() {
        let p = c as f64 / t;
        kl += p * (p.ln() - params.log_prob(s)?);
    }
    Ok((kl / LN_2).max(0.0))
}

/// KL between the empirical marginal of `s_{1:k}` and the model marginal of
/// `h_n` on the same prefix, for `k = 2..=n_max`.
pub fn kl_prefix_curve(sample: &EmpiricalSample, params: &HfmParams, n_max: usize) -> Result<Vec<(usize, f64)>> {
    if n_max < 2 {
        return Err(HfmError::param("n_max", "must be at least 2"));
    }
    if n_max > sample.width() || sample.width() != params.width() {
        return Err(HfmError::param(
            "n_max",
            format!("sample width {} and model width {} must cover n_max = {n_max}", sample.width(), params.width()),
        ));
    }
    if sample.is_empty() {
        return Err(HfmError::EmptySample);
    }
    let t = sample.total() as f64;
    (2..=n_max)
        .map(|k| {
            let marginal = sample.prefix(k)?;
            let mut kl = 0.0;
            for (s, c) in marginal.iter() {
                let p = c as f64 / t;
                kl += p * (p / params.prefix_prob(s)?).log2();
            }
            Ok((k, kl.max(0.0)))
        })
        .collect()
}

/// Maximum-likelihood coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GFit {
    pub g: f64,
    /// Set when the sample mean of `m` is at or below `E_{G_FIT_MAX}[m]`,
    /// e.g. an all-featureless sample; `g` is then clamped to [`G_FIT_MAX`].
    pub degenerate: bool,
}

/// Solves `E_g[m] = mean m` by bisection on `[G_FIT_MIN, G_FIT_MAX]`.
///
/// `m` is a sufficient statistic of the HFM, so this is the maximum-likelihood
/// `g` for the sample as labelled.
pub fn fit_g(sample: &EmpiricalSample) -> Result<GFit> {
    let n = sample.width();
    let target = sample.mean_level()?;
    let mean_at = |g: f64| HfmParams::new(n, g).map(|p| p.mean_level());
    let top = mean_at(G_FIT_MAX)?;
    if target <= top {
        if target > 0.0 {
            warn!("mean level {target} below E[m] at g = {G_FIT_MAX}; clamping");
        }
        return Ok(GFit {
            g: G_FIT_MAX,
            degenerate: true,
        });
    }
    let bottom = mean_at(G_FIT_MIN)?;
    if target >= bottom {
        return Err(HfmError::NoRoot(format!(
            "mean level {target} is not below E[m] = {bottom} at g = {G_FIT_MIN}"
        )));
    }
    let (mut lo, mut hi) = (G_FIT_MIN, G_FIT_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(GFit {
        g: 0.5 * (lo + hi),
        degenerate: false,
    })
}

/// Distinct states as lists of active features, with counts.
struct Compiled {
    states: Vec<(u64, Vec<u16>)>,
}

impl Compiled {
    fn new(sample: &EmpiricalSample) -> Self {
        let states = sample
            .iter()
            .filter(|(s, _)| !s.is_featureless())
            .map(|(s, c)| {
                let active = s.bits().enumerate().filter(|(_, b)| *b).map(|(i, _)| i as u16).collect();
                (c, active)
            })
            .collect();
        Self { states }
    }

    /// `sum_s count_s m_{G(s)}` for the permutation with inverse `pos`
    /// (feature `j` lands at 0-based position `pos[j]`).
    fn cost(&self, pos: &[usize]) -> u64 {
        self.states
            .iter()
            .map(|(c, active)| c * (active.iter().map(|&j| pos[j as usize]).max().unwrap() as u64 + 1))
            .sum()
    }
}

fn inverse(pi: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; pi.len()];
    for (i, &p) in pi.iter().enumerate() {
        pos[p] = i;
    }
    pos
}

/// Lexicographic successor; false after the last permutation.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Feature order minimizing `KL(sample || h_n)` for a gauge-fixed sample.
///
/// For any `g > 0` the KL is an increasing function of `sum count * m`, so the
/// optimum does not depend on `g`. Widths up to 8 are searched exhaustively;
/// wider samples start from features sorted by descending activation
/// frequency and descend by the best pairwise swap. Ties go to the
/// lexicographically smallest `pi`.
pub fn optimize_permutation(sample: &EmpiricalSample, g: f64) -> Result<GaugePerm> {
    if !(g > 0.0) {
        return Err(HfmError::param("g", "must be positive"));
    }
    let n = sample.width();
    let compiled = Compiled::new(sample);
    let pi = if n <= EXHAUSTIVE_MAX_WIDTH {
        exhaustive(&compiled, n)
    } else {
        hill_climb(&compiled, sample, n)
    };
    GaugePerm::permutation(pi)
}

fn exhaustive(compiled: &Compiled, n: usize) -> Vec<usize> {
    let mut pi: Vec<usize> = (0..n).collect();
    let mut best = (compiled.cost(&inverse(&pi)), pi.clone());
    while next_permutation(&mut pi) {
        let c = compiled.cost(&inverse(&pi));
        if c < best.0 {
            best = (c, pi.clone());
        }
    }
    best.1
}

fn hill_climb(compiled: &Compiled, sample: &EmpiricalSample, n: usize) -> Vec<usize> {
    let mut activity = vec![0u64; n];
    for (s, c) in sample.iter() {
        for (i, b) in s.bits().enumerate() {
            if b {
                activity[i] += c;
            }
        }
    }
    let mut pi: Vec<usize> = (0..n).collect();
    pi.sort_by(|&a, &b| activity[b].cmp(&activity[a]).then(a.cmp(&b)));
    let mut cost = compiled.cost(&inverse(&pi));
    loop {
        let mut best: Option<(u64, Vec<usize>)> = None;
        for a in 0..n {
            for b in a + 1..n {
                let mut cand = pi.clone();
                cand.swap(a, b);
                let c = compiled.cost(&inverse(&cand));
                let better = match &best {
                    None => c < cost,
                    Some((bc, bp)) => c < *bc || (c == *bc && cand < *bp),
                };
                if better {
                    best = Some((c, cand));
                }
            }
        }
        match best {
            Some((c, cand)) => {
                cost = c;
                pi = cand;
            }
            None => return pi,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::FeatureState;

    #[test]
    fn uniform_sample_against_critical_hfm() {
        let sample = EmpiricalSample::from_states(2, (0..4).map(|i| FeatureState::from_index(i, 2))).unwrap();
        let params = HfmParams::new(2, LN_2).unwrap();
        let curve = kl_prefix_curve(&sample, &params, 2).unwrap();
        assert!((curve[0].1 - 0.25).abs() < 1e-12);
        assert!((hfm_kl_bits(&sample, &params).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn fit_g_recovers_critical_point_mean() {
        // counts proportional to h_3 at g = ln 2 reproduce E[m] exactly
        let params = HfmParams::new(3, LN_2).unwrap();
        let dense = params.dense().unwrap();
        let counts = dense.probs().iter().enumerate().map(|(i, p)| {
            (FeatureState::from_index(i as u64, 3), (p * 20.0).round() as u64)
        });
        let sample = EmpiricalSample::from_counts(3, counts).unwrap();
        let fit = fit_g(&sample).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.g - LN_2).abs() < 1e-9, "{}", fit.g);
    }

    #[test]
    fn fit_g_flags_featureless_sample() {
        let sample = EmpiricalSample::from_counts(5, [(FeatureState::zeros(5), 10)]).unwrap();
        assert_eq!(
            fit_g(&sample).unwrap(),
            GFit {
                g: G_FIT_MAX,
                degenerate: true
            }
        );
    }

    #[test]
    fn fit_g_rejects_anti_hfm_sample() {
        let sample = EmpiricalSample::from_counts(4, [(FeatureState::ones(4), 10)]).unwrap();
        assert!(matches!(fit_g(&sample), Err(HfmError::NoRoot(_))));
    }

    #[test]
    fn next_permutation_enumerates_in_order() {
        let mut v = vec![0, 1, 2];
        let mut seen = vec![v.clone()];
        while next_permutation(&mut v) {
            seen.push(v.clone());
        }
        assert_eq!(seen.len(), 6);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ties_resolve_to_identity() {
        // all single-feature states equally frequent: every order costs the same
        let sample = EmpiricalSample::from_states(3, (0..3).map(|i| FeatureState::from_index(1 << i, 3))).unwrap();
        assert!(optimize_permutation(&sample, 1.0).unwrap().is_identity());
    }
}
