//! Breadth renormalization transformations on dense distributions.
//!
//! The coarse-graining map marginalizes the finest feature `s_n`, prepends a
//! fresh uniform feature as the new `s_1`, and mixes the result with a point
//! mass on the featureless state with weight `alpha`. For fixed `alpha` it is
//! the linear map `p -> p T` of a random walk with resetting on the de Bruijn
//! graph ([`TransitionMatrix`]).
//!
//! The fine-graining map zooms into `s_1 = 1`, shifts the remaining features
//! down and appends a new finest feature with `p(s_n = 1) = q`, uniform over
//! the other features when it is active.
//!
//! `alpha` and `q` are chosen by bisection so that the resolution `H[s]`
//! matches a target (by default the entropy of the starting distribution).

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dist::{check_dense_width, DenseDistribution};
use crate::error::{HfmError, Result};
use crate::info::{binary_entropy, entropy_bits, kl_bits, total_variation};
use crate::model::{level_of_index, G_CRITICAL};

/// Bisection iteration cap for both solvers.
pub const MAX_BISECTION_STEPS: usize = 200;

/// Default tolerance on the entropy mismatch for both solvers.
pub const DEFAULT_ENTROPY_TOLERANCE: f64 = 1e-12;

/// Largest width accepted by [`TransitionMatrix::stationary_direct`]; the
/// dense system has `4^n` entries.
pub const DIRECT_SOLVE_MAX_WIDTH: usize = 11;

fn check_unit(name: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(HfmError::param(name, format!("must lie in [0, 1], got {x}")))
    }
}

/// One coarse-graining step with a given reset weight `alpha`.
pub fn coarse_step(p: &DenseDistribution, alpha: f64) -> Result<DenseDistribution> {
    check_unit("alpha", alpha)?;
    let n = p.width();
    let size = p.len();
    let keep = (size >> 1) - 1;
    let mut out = vec![0.0; size];
    let half = 0.5 * (1.0 - alpha);
    for (i, &mass) in p.probs().iter().enumerate() {
        let shifted = (i & keep) << 1;
        out[shifted] += half * mass;
        out[shifted | 1] += half * mass;
    }
    out[0] += alpha;
    Ok(DenseDistribution::from_parts_unchecked(n, out))
}

/// One fine-graining step with new-feature activation probability `q`.
pub fn fine_step(p: &DenseDistribution, q: f64) -> Result<DenseDistribution> {
    check_unit("q", q)?;
    let zoomed = zoom(p)?;
    let n = p.width();
    let lower = 1usize << (n - 1);
    let mut out = vec![0.0; 1 << n];
    let uniform = q / lower as f64;
    for (i, &mass) in zoomed.iter().enumerate() {
        out[i] = (1.0 - q) * mass;
        out[i | lower] = uniform;
    }
    Ok(DenseDistribution::from_parts_unchecked(n, out))
}

/// `p(s_{2:n} | s_1 = 1)` re-indexed as a distribution over `n - 1` features.
fn zoom(p: &DenseDistribution) -> Result<Vec<f64>> {
    let mut zoomed: Vec<f64> = p.probs().iter().skip(1).step_by(2).copied().collect();
    let mass: f64 = zoomed.iter().sum();
    if !(mass > 0.0) {
        return Err(HfmError::ZoomUndefined);
    }
    zoomed.iter_mut().for_each(|x| *x /= mass);
    Ok(zoomed)
}

/// Entropy of `coarse_step(p, alpha)` as a closed-form function of `alpha`.
///
/// With `H~` the entropy after marginalizing `s_n` and adding the uniform
/// feature, and `p~0` the mass of the featureless state at that point,
/// `H[p'] = H~ + h(q) - alpha H~ - (1 - alpha) h(p~0)` with
/// `q = alpha + (1 - alpha) p~0`. The function is concave in `alpha`, equals
/// `H~ >= H[p] - H[s_n | s_{1:n-1}] + 1` at `alpha = 0` and vanishes at
/// `alpha = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseEntropy {
    /// `H[p]` of the input.
    pub input_entropy: f64,
    /// `H[s_n | s_{1:n-1}]` of the input.
    pub conditional_entropy: f64,
    /// `H~` after steps 1-3.
    pub expanded_entropy: f64,
    /// `p~(0_{1:n})` after steps 1-3.
    pub featureless_mass: f64,
}

impl CoarseEntropy {
    pub fn new(p: &DenseDistribution) -> Self {
        let input_entropy = p.entropy_bits();
        let n = p.width();
        let featureless_mass;
        let marginal_entropy = if n == 1 {
            featureless_mass = 0.5;
            0.0
        } else {
            let marginal = p.prefix_marginal(n - 1).expect("n >= 2");
            featureless_mass = 0.5 * marginal.probs()[0];
            marginal.entropy_bits()
        };
        Self {
            input_entropy,
            conditional_entropy: input_entropy - marginal_entropy,
            expanded_entropy: marginal_entropy + 1.0,
            featureless_mass,
        }
    }

    /// `H[coarse_step(p, alpha)]`.
    pub fn entropy_after(&self, alpha: f64) -> f64 {
        let q = alpha + (1.0 - alpha) * self.featureless_mass;
        self.expanded_entropy + binary_entropy(q)
            - alpha * self.expanded_entropy
            - (1.0 - alpha) * binary_entropy(self.featureless_mass)
    }

    /// `Delta H(alpha) = H[coarse_step(p, alpha)] - target`.
    pub fn delta(&self, alpha: f64, target: f64) -> f64 {
        self.entropy_after(alpha) - target
    }

    /// `Delta H(alpha)` for the entropy-preserving transformation, written in
    /// terms of `H[s_n | s_{1:n-1}]`.
    pub fn delta_preserving(&self, alpha: f64) -> f64 {
        let q = alpha + (1.0 - alpha) * self.featureless_mass;
        binary_entropy(q) - alpha * self.expanded_entropy
            - (1.0 - alpha) * binary_entropy(self.featureless_mass)
            + 1.0
            - self.conditional_entropy
    }
}

/// Finds the unique `alpha` in `[0, 1]` with `H[coarse_step(p, alpha)] = target`.
pub fn solve_alpha(p: &DenseDistribution, target_entropy: f64) -> Result<f64> {
    solve_alpha_with(p, target_entropy, DEFAULT_ENTROPY_TOLERANCE)
}

pub fn solve_alpha_with(p: &DenseDistribution, target_entropy: f64, tolerance: f64) -> Result<f64> {
    if !(target_entropy > 1.0) {
        return Err(HfmError::NoRoot(format!(
            "target entropy {target_entropy} bits is not above 1 bit"
        )));
    }
    let f = CoarseEntropy::new(p);
    let at_zero = f.delta(0.0, target_entropy);
    if at_zero.abs() < tolerance {
        return Ok(0.0);
    }
    if at_zero < 0.0 {
        return Err(HfmError::NoRoot(format!(
            "target {target_entropy} bits exceeds the largest reachable entropy {} bits",
            f.expanded_entropy
        )));
    }
    if f.delta(1.0, target_entropy) >= 0.0 {
        return Err(HfmError::NoRoot("Delta H(1) >= 0".into()));
    }
    Ok(bisect(|a| f.delta(a, target_entropy), 0.0, 1.0, tolerance))
}

/// Bisection on a bracketing interval `[lo, hi]` whose endpoint values differ in sign.
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tolerance: f64) -> f64 {
    let descending = f(lo) > f(hi);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTION_STEPS {
        mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() < tolerance || mid <= lo || mid >= hi {
            break;
        }
        if (v > 0.0) == descending {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

/// Entropy of `fine_step(p, q)` as a function of `q`:
/// `h(q) + (1 - q) H[zoomed] + q (n - 1)`, concave in `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineEntropy {
    pub zoomed_entropy: f64,
    pub width: usize,
}

impl FineEntropy {
    pub fn new(p: &DenseDistribution) -> Result<Self> {
        Ok(Self {
            zoomed_entropy: entropy_bits(&zoom(p)?),
            width: p.width(),
        })
    }

    pub fn entropy_after(&self, q: f64) -> f64 {
        binary_entropy(q) + (1.0 - q) * self.zoomed_entropy + q * (self.width - 1) as f64
    }

    /// Location of the maximum over `q`.
    pub fn argmax(&self) -> f64 {
        let log_odds = (self.width - 1) as f64 - self.zoomed_entropy;
        1.0 / (1.0 + (-log_odds).exp2())
    }
}

/// Finds `q` in `(0, 1)` with `H[fine_step(p, q)] = target`; the smallest root
/// when two exist.
pub fn solve_q(p: &DenseDistribution, target_entropy: f64) -> Result<f64> {
    solve_q_with(p, target_entropy, DEFAULT_ENTROPY_TOLERANCE)
}

pub fn solve_q_with(p: &DenseDistribution, target_entropy: f64, tolerance: f64) -> Result<f64> {
    let f = FineEntropy::new(p)?;
    let peak = f.argmax();
    let top = f.entropy_after(peak);
    let h0 = f.entropy_after(0.0);
    let h1 = f.entropy_after(1.0);
    let unreachable = || {
        HfmError::NoRoot(format!(
            "target {target_entropy} bits outside the reachable range ({}, {top}] bits",
            h0.min(h1)
        ))
    };
    if target_entropy > top + tolerance {
        return Err(unreachable());
    }
    if (target_entropy - top).abs() <= tolerance {
        return Ok(peak);
    }
    let g = |q: f64| f.entropy_after(q) - target_entropy;
    if target_entropy > h0 {
        if target_entropy > h1 {
            warn!(
                "fine-graining entropy is non-monotone in q (H(0) = {h0}, H(1) = {h1}); \
                 returning the smaller of two roots for target {target_entropy}"
            );
        }
        Ok(bisect(g, 0.0, peak, tolerance))
    } else if target_entropy > h1 {
        Ok(bisect(g, peak, 1.0, tolerance))
    } else {
        Err(unreachable())
    }
}

/// Sparse stochastic matrix of the coarse-graining map for fixed `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    alpha: f64,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TransitionMatrix {
    /// From each state: `(1 - alpha)/2` to `(0, s_{1:n-1})` and to
    /// `(1, s_{1:n-1})`, plus `alpha` to the featureless state.
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        check_dense_width(n)?;
        check_unit("alpha", alpha)?;
        let size = 1usize << n;
        let keep = (size >> 1) - 1;
        let half = 0.5 * (1.0 - alpha);
        let rows = (0..size)
            .map(|i| {
                let shifted = (i & keep) << 1;
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(3);
                if shifted == 0 {
                    row.push((0, half + alpha));
                    row.push((1, half));
                } else {
                    row.push((0, alpha));
                    row.push((shifted, half));
                    row.push((shifted | 1, half));
                }
                row.retain(|&(_, v)| v != 0.0);
                row
            })
            .collect();
        Ok(Self { n, alpha, rows })
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// `p T`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.rows.len());
        let mut out = vec![0.0; p.len()];
        for (row, &mass) in self.rows.iter().zip(p) {
            for &(j, t) in row {
                out[j] += mass * t;
            }
        }
        out
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let size = self.rows.len();
        self.rows
            .iter()
            .map(|row| {
                let mut r = vec![0.0; size];
                for &(j, t) in row {
                    r[j] += t;
                }
                r
            })
            .collect()
    }

    /// Whether every entry of `T^m` is strictly positive.
    pub fn power_is_positive(&self, m: usize) -> bool {
        let size = self.rows.len();
        // reachability sets after m steps, one row per start state
        let mut reach: Vec<Vec<bool>> = (0..size)
            .map(|i| {
                let mut r = vec![false; size];
                r[i] = true;
                r
            })
            .collect();
        for _ in 0..m {
            reach = reach
                .into_iter()
                .map(|r| {
                    let mut next = vec![false; size];
                    for (i, &on) in r.iter().enumerate() {
                        if on {
                            for &(j, t) in &self.rows[i] {
                                if t > 0.0 {
                                    next[j] = true;
                                }
                            }
                        }
                    }
                    next
                })
                .collect();
        }
        reach.iter().all(|r| r.iter().all(|&b| b))
    }

    /// Stationary vector by power iteration from `start`.
    pub fn stationary_from(&self, start: &[f64], tolerance: f64, max_iterations: usize) -> (Vec<f64>, usize) {
        let mut p = start.to_vec();
        for it in 1..=max_iterations {
            let next = self.apply(&p);
            let d = total_variation(&next, &p);
            p = next;
            if d < tolerance {
                return (p, it);
            }
        }
        (p, max_iterations)
    }

    pub fn stationary(&self, tolerance: f64, max_iterations: usize) -> DenseDistribution {
        let size = self.rows.len();
        let (p, _) = self.stationary_from(&vec![1.0 / size as f64; size], tolerance, max_iterations);
        DenseDistribution::from_parts_unchecked(self.n, p)
    }

    /// Stationary vector from the linear system `pi (T - I) = 0`, `sum pi = 1`,
    /// by dense Gaussian elimination. Power iteration mixes slowly when
    /// `alpha` is small relative to `2^-n`; this does not.
    pub fn stationary_direct(&self) -> Result<DenseDistribution> {
        if self.n > DIRECT_SOLVE_MAX_WIDTH {
            return Err(HfmError::TooWide {
                n: self.n,
                max: DIRECT_SOLVE_MAX_WIDTH,
            });
        }
        let size = self.rows.len();
        // a[j][i] = T[i][j] - delta_ij; the first equation is replaced by normalization
        let mut a = vec![vec![0.0; size]; size];
        for (i, row) in self.rows.iter().enumerate() {
            a[i][i] -= 1.0;
            for &(j, t) in row {
                a[j][i] += t;
            }
        }
        a[0].iter_mut().for_each(|v| *v = 1.0);
        let mut b = vec![0.0; size];
        b[0] = 1.0;
        for col in 0..size {
            let pivot = (col..size)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .expect("non-empty range");
            if a[pivot][col] == 0.0 {
                return Err(HfmError::Undefined("stationary vector: singular system".into()));
            }
            a.swap(col, pivot);
            b.swap(col, pivot);
            let (head, tail) = a.split_at_mut(col + 1);
            let pivot_row = &head[col];
            for (offset, row) in tail.iter_mut().enumerate() {
                let f = row[col] / pivot_row[col];
                if f != 0.0 {
                    for k in col..size {
                        row[k] -= f * pivot_row[k];
                    }
                    b[col + 1 + offset] -= f * b[col];
                }
            }
        }
        let mut x = vec![0.0; size];
        for i in (0..size).rev() {
            let s: f64 = (i + 1..size).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        // round-off can leave tiny negative entries
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        DenseDistribution::from_weights(self.n, x)
    }
}

/// The coarse-graining fixed point
/// `p*(s) = (1 - 1/(e^g - 1)) e^{-g m_s} + e^{-g n}/(e^g - 1)`, which is the
/// marginal of the first `n` features of an HFM with infinitely many features.
/// Only exists above the critical coupling.
pub fn analytic_fixed_point(n: usize, g: f64) -> Result<DenseDistribution> {
    check_dense_width(n)?;
    if g.is_nan() || g <= G_CRITICAL {
        return Err(HfmError::BelowPhaseBoundary { g });
    }
    let c = 1.0 / g.exp_m1();
    let floor = if g.is_infinite() { 0.0 } else { (-g * n as f64).exp() * c };
    let probs = (0..1usize << n)
        .map(|i| {
            let m = level_of_index(i);
            let b = if m == 0 { 1.0 } else { (-g * m as f64).exp() };
            (1.0 - c) * b + floor
        })
        .collect();
    Ok(DenseDistribution::from_parts_unchecked(n, probs))
}

/// Reset weight `alpha = 1 - xi = 1 - 2 e^{-g}` that leaves the fixed point invariant.
pub fn fixed_point_alpha(g: f64) -> f64 {
    1.0 - 2.0 * (-g).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceMetric {
    #[default]
    TotalVariation,
    Kl,
}

impl ConvergenceMetric {
    pub fn distance(&self, a: &DenseDistribution, b: &DenseDistribution) -> f64 {
        match self {
            ConvergenceMetric::TotalVariation => total_variation(a.probs(), b.probs()),
            ConvergenceMetric::Kl => kl_bits(a.probs(), b.probs()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgConfig {
    /// Resolution to hold fixed, in bits. `None` uses the entropy of the start.
    pub target_entropy: Option<f64>,
    pub alpha_tolerance: f64,
    pub max_iterations: usize,
    pub convergence_metric: ConvergenceMetric,
    /// Step distance that ends the iteration. The entropy solve leaves
    /// jitter of order 1e-12 per step, so tolerances that small can stall.
    pub convergence_tolerance: f64,
}

impl Default for RgConfig {
    fn default() -> Self {
        Self {
            target_entropy: None,
            alpha_tolerance: DEFAULT_ENTROPY_TOLERANCE,
            max_iterations: 500,
            convergence_metric: ConvergenceMetric::TotalVariation,
            convergence_tolerance: 1e-10,
        }
    }
}

impl RgConfig {
    pub fn validate(&self, direction: Direction) -> Result<()> {
        if !(self.alpha_tolerance > 0.0) {
            return Err(HfmError::param("alpha_tolerance", "must be positive"));
        }
        if !(self.convergence_tolerance > 0.0) {
            return Err(HfmError::param("convergence_tolerance", "must be positive"));
        }
        if let (Some(h), Direction::Coarse) = (self.target_entropy, direction) {
            if !(h > 1.0) {
                return Err(HfmError::param("target_entropy", "must exceed 1 bit"));
            }
        }
        Ok(())
    }
}

/// Trace of a fixed-point run. `alpha_trace` holds `q` for the fine direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgDiagnostics {
    pub iterations: usize,
    pub alpha_trace: Vec<f64>,
    pub distance_trace: Vec<f64>,
    pub converged: bool,
}

/// Alternates the entropy-matching solve and the step until successive
/// iterates are closer than the configured tolerance.
pub fn iterate_to_fixed_point(
    p0: &DenseDistribution,
    config: &RgConfig,
    direction: Direction,
) -> Result<(DenseDistribution, RgDiagnostics)> {
    config.validate(direction)?;
    let target = config.target_entropy.unwrap_or_else(|| p0.entropy_bits());
    let mut p = p0.clone();
    let mut diag = RgDiagnostics {
        iterations: 0,
        alpha_trace: Vec::new(),
        distance_trace: Vec::new(),
        converged: false,
    };
    while diag.iterations < config.max_iterations {
        let (param, next) = match direction {
            Direction::Coarse => {
                let a = solve_alpha_with(&p, target, config.alpha_tolerance)?;
                (a, coarse_step(&p, a)?)
            }
            Direction::Fine => {
                let q = solve_q_with(&p, target, config.alpha_tolerance)?;
                (q, fine_step(&p, q)?)
            }
        };
        let d = config.convergence_metric.distance(&next, &p);
        diag.iterations += 1;
        diag.alpha_trace.push(param);
        diag.distance_trace.push(d);
        p = next;
        if d < config.convergence_tolerance {
            diag.converged = true;
            break;
        }
    }
    if !diag.converged {
        warn!(
            "{direction:?} iteration did not converge in {} steps (last distance {:?})",
            config.max_iterations,
            diag.distance_trace.last()
        );
    }
    Ok((p, diag))
}
