//! Propagation of bounded visible observables to deep layers.
//!
//! For a linear observable `phi_0(x) = offset + w.x`, the layer-`l` value is
//! `phi_l(s) = E[phi_0(x) | s^(l) = s]` under the generative (downward)
//! conditionals. Layer 1 is exact because `phi_0` is linear:
//! `phi_1(s) = offset + w.sigmoid(c + W s)`. Deeper layers average `phi_1`
//! over Monte Carlo rollouts. Along the downward chain `phi_l` is a martingale,
//! `E[phi_{l-1}(s^(l-1)) | s^(l)] = phi_l(s^(l))`.

use hfm::FeatureState;
use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DbnError, Result};
use crate::model::Dbn;
use crate::sampling::{clamped_states, propagate_down};

/// `phi_0(x) = offset + sum_i weights_i x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub name: String,
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl ObservableSpec {
    pub fn constant(width: usize, value: f64) -> Self {
        Self {
            name: "constant".into(),
            weights: vec![0.0; width],
            offset: value,
        }
    }

    /// Ink in the left half minus ink in the right half of a `side x side`
    /// row-major image, divided by the half-area. Bounded by `[-1, 1]`.
    pub fn left_minus_right(side: usize) -> Self {
        Self::halves("left_minus_right", side, |_, col| col)
    }

    /// Same with top and bottom halves.
    pub fn top_minus_bottom(side: usize) -> Self {
        Self::halves("top_minus_bottom", side, |row, _| row)
    }

    fn halves(name: &str, side: usize, coord: impl Fn(usize, usize) -> usize) -> Self {
        let half = side / 2;
        let scale = 1.0 / (half * side).max(1) as f64;
        let mut weights = vec![0.0; side * side];
        for row in 0..side {
            for col in 0..side {
                let c = coord(row, col);
                weights[row * side + col] = if c < half {
                    scale
                } else if c >= side - half {
                    -scale
                } else {
                    0.0
                };
            }
        }
        Self {
            name: name.into(),
            weights,
            offset: 0.0,
        }
    }

    /// `(phi_-, phi_+)` over all binary inputs.
    pub fn bounds(&self) -> (f64, f64) {
        let lo = self.weights.iter().filter(|w| **w < 0.0).sum::<f64>();
        let hi = self.weights.iter().filter(|w| **w > 0.0).sum::<f64>();
        (self.offset + lo, self.offset + hi)
    }

    pub fn evaluate(&self, x: ArrayView1<f64>) -> f64 {
        self.offset + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    fn check(&self, dbn: &Dbn) -> Result<()> {
        if self.weights.len() == dbn.width(0) {
            Ok(())
        } else {
            Err(DbnError::Shape(format!(
                "observable has {} weights for {} visible units",
                self.weights.len(),
                dbn.width(0)
            )))
        }
    }

    /// Exact `phi_1` for each row of layer-1 states.
    pub fn layer_one(&self, dbn: &Dbn, s1: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check(dbn)?;
        let means = dbn.rbm(1)?.visible_means_batch(s1)?;
        Ok(means.dot(&Array1::from(self.weights.clone())) + self.offset)
    }
}

/// Monte Carlo estimate of `phi_l` at one state with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// `phi_l` for every row of `states` (layer `l >= 1`). Exact for `l = 1`;
/// otherwise `rollouts` downward samples per row.
pub fn estimate_phi<R: rand::Rng>(
    dbn: &Dbn,
    spec: &ObservableSpec,
    l: usize,
    states: ArrayView2<f64>,
    rollouts: usize,
    rng: &mut R,
) -> Result<Vec<PhiEstimate>> {
    dbn.check_layer(l)?;
    spec.check(dbn)?;
    if l == 1 {
        return Ok(spec
            .layer_one(dbn, states)?
            .iter()
            .map(|&value| PhiEstimate { value, stderr: 0.0 })
            .collect());
    }
    if rollouts == 0 {
        return Err(DbnError::Config("rollouts must be positive".into()));
    }
    let mut out = Vec::with_capacity(states.nrows());
    for row in states.rows() {
        let copies = row.insert_axis(Axis(0)).broadcast((rollouts, row.len())).expect("broadcast").to_owned();
        let s1 = propagate_down(dbn, copies, l, 1, rng)?;
        let phi = spec.layer_one(dbn, s1.view())?;
        let value = phi.mean().expect("rollouts > 0");
        let var = if rollouts > 1 { phi.var(1.0) } else { 0.0 };
        out.push(PhiEstimate {
            value,
            stderr: (var / rollouts as f64).sqrt(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservablePoint {
    pub state: FeatureState,
    pub phi: PhiEstimate,
}

/// Clamps every datapoint to layer `l` once and estimates `phi_l` there.
pub fn propagate_observable(
    dbn: &Dbn,
    spec: &ObservableSpec,
    l: usize,
    data: ArrayView2<f64>,
    rollouts: usize,
    seed: u64,
) -> Result<Vec<ObservablePoint>> {
    let states = clamped_states(dbn, data, l, 1, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let phis = estimate_phi(dbn, spec, l, states.view(), rollouts, &mut rng)?;
    Ok(states
        .rows()
        .into_iter()
        .zip(phis)
        .map(|(row, phi)| {
            let bits: Vec<u8> = row.iter().map(|&v| (v > 0.5) as u8).collect();
            ObservablePoint {
                state: FeatureState::from_bits(&bits),
                phi,
            }
        })
        .collect())
}

/// Counts over a `bins x bins` grid covering the given ranges; values on the
/// upper edge go to the last bin and values outside are dropped.
pub fn joint_histogram(a: &[f64], b: &[f64], bins: usize, range_a: (f64, f64), range_b: (f64, f64)) -> Vec<Vec<u64>> {
    assert_eq!(a.len(), b.len());
    let mut grid = vec![vec![0u64; bins]; bins];
    let bin = |v: f64, (lo, hi): (f64, f64)| -> Option<usize> {
        if !(v >= lo && v <= hi) || hi <= lo {
            return None;
        }
        Some((((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1))
    };
    for (&x, &y) in a.iter().zip(b) {
        if let (Some(i), Some(j)) = (bin(x, range_a), bin(y, range_b)) {
            grid[i][j] += 1;
        }
    }
    grid
}

/// Pairs `(phi_l(s^(l)), phi_{l-1}(s^(l-1)))` where `s^(l)` is clamped from
/// the data and `s^(l-1)` is drawn from the generative conditional given it.
/// Also returns the Monte Carlo variances of the `phi_l` estimates.
pub fn martingale_pairs(
    dbn: &Dbn,
    spec: &ObservableSpec,
    l: usize,
    data: ArrayView2<f64>,
    rollouts: usize,
    seed: u64,
) -> Result<MartingaleSample> {
    if l < 2 {
        return Err(DbnError::Layer { layer: l, depth: dbn.depth() });
    }
    dbn.check_layer(l)?;
    let upper = clamped_states(dbn, data, l, 1, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let lower = propagate_down(dbn, upper.clone(), l, l - 1, &mut rng)?;
    let phi_upper = estimate_phi(dbn, spec, l, upper.view(), rollouts, &mut rng)?;
    let phi_lower = estimate_phi(dbn, spec, l - 1, lower.view(), rollouts, &mut rng)?;
    Ok(MartingaleSample {
        upper: phi_upper.iter().map(|p| p.value).collect(),
        lower: phi_lower.iter().map(|p| p.value).collect(),
        upper_noise_var: phi_upper.iter().map(|p| p.stderr * p.stderr).sum::<f64>() / phi_upper.len().max(1) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSample {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    /// Mean squared standard error of the `upper` estimates.
    pub upper_noise_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// 95% normal confidence interval for the slope.
    pub ci95: (f64, f64),
    pub n: usize,
    /// Corrected over raw `x` variance. The stderr ignores the uncertainty of
    /// the noise correction, so the interval is only trustworthy near 1.
    pub reliability: f64,
}

/// Ordinary least squares of `y` on `x`. `noise_var` is the variance of
/// independent measurement error in `x`; it is removed from the `x` variance
/// (errors-in-variables correction). `None` if `x` has no spread left.
pub fn regress(x: &[f64], y: &[f64], noise_var: f64) -> Option<Regression> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let raw_sxx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / nf;
    let sxx = raw_sxx - noise_var;
    let sxy = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / nf;
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = (rss / (nf - 2.0) / (sxx * nf)).sqrt();
    Some(Regression {
        slope,
        intercept,
        slope_stderr,
        ci95: (slope - 1.96 * slope_stderr, slope + 1.96 * slope_stderr),
        n,
        reliability: sxx / raw_sxx,
    })
}
