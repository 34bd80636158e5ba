//! Second-order (TAP) mean-field magnetizations of an RBM at unit temperature.
//!
//! A solution satisfies, for hidden `j` and visible `i`,
//!
//! ```text
//! m_s_j = sigmoid(b_j + sum_i W_ij m_x_i - sum_i W_ij^2 (m_s_j - 1/2)(m_x_i - m_x_i^2))
//! m_x_i = sigmoid(c_i + sum_j W_ij m_s_j - sum_j W_ij^2 (m_x_i - 1/2)(m_s_j - m_s_j^2))
//! ```

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{DbnError, Result};
use crate::rbm::{sigmoid, Rbm};

/// Initial magnetizations are clipped into `[EDGE, 1 - EDGE]`.
pub const EDGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TapConfig {
    /// Weight of the new iterate in the damped update, in `(0, 1]`.
    pub damping: f64,
    /// Convergence threshold on the max-norm residual.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for TapConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tolerance: 1e-6,
            max_iterations: 1000,
        }
    }
}

impl TapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(DbnError::Config("damping must lie in (0, 1]".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(DbnError::Config("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapState {
    pub m_x: Array1<f64>,
    pub m_s: Array1<f64>,
    pub converged: bool,
    /// Damped updates applied.
    pub iterations: usize,
}

impl TapState {
    pub fn new(m_x: Array1<f64>, m_s: Array1<f64>) -> Self {
        Self {
            m_x,
            m_s,
            converged: false,
            iterations: 0,
        }
    }

    /// Max-norm distance over both layers.
    pub fn distance(&self, other: &Self) -> f64 {
        self.m_x
            .iter()
            .zip(&other.m_x)
            .chain(self.m_s.iter().zip(&other.m_s))
            .fold(0.0, |d, (a, b)| d.max((a - b).abs()))
    }
}

fn hidden_map(rbm: &Rbm, m_x: &Array1<f64>, m_s: &Array1<f64>) -> Array1<f64> {
    let w2 = rbm.weights.mapv(|w| w * w);
    let var_x = m_x.mapv(|m| m - m * m);
    let field = m_x.dot(&rbm.weights) + &rbm.hidden_bias;
    let onsager = var_x.dot(&w2);
    Array1::from_shape_fn(m_s.len(), |j| sigmoid(field[j] - onsager[j] * (m_s[j] - 0.5)))
}

fn visible_map(rbm: &Rbm, m_x: &Array1<f64>, m_s: &Array1<f64>) -> Array1<f64> {
    let w2 = rbm.weights.mapv(|w| w * w);
    let var_s = m_s.mapv(|m| m - m * m);
    let field = rbm.weights.dot(m_s) + &rbm.visible_bias;
    let onsager = w2.dot(&var_s);
    Array1::from_shape_fn(m_x.len(), |i| sigmoid(field[i] - onsager[i] * (m_x[i] - 0.5)))
}

/// Largest violation of the TAP equations at the given magnetizations.
pub fn tap_residual(rbm: &Rbm, state: &TapState) -> f64 {
    let fs = hidden_map(rbm, &state.m_x, &state.m_s);
    let fx = visible_map(rbm, &state.m_x, &state.m_s);
    fs.iter()
        .zip(&state.m_s)
        .chain(fx.iter().zip(&state.m_x))
        .fold(0.0, |d, (a, b)| d.max((a - b).abs()))
}

/// Damped iteration from `init`, hidden layer first. Stops when the residual
/// drops below the tolerance; otherwise returns with `converged = false`.
pub fn tap_solve(rbm: &Rbm, init: &TapState, config: &TapConfig) -> Result<TapState> {
    config.validate()?;
    if init.m_x.len() != rbm.visible_width() || init.m_s.len() != rbm.hidden_width() {
        return Err(DbnError::Shape("initial magnetizations do not match the RBM".into()));
    }
    let inside = |v: &Array1<f64>| v.iter().all(|&m| m > 0.0 && m < 1.0);
    if !inside(&init.m_x) || !inside(&init.m_s) {
        return Err(DbnError::Config("initial magnetizations must lie in (0, 1)".into()));
    }
    let d = config.damping;
    let mut state = TapState::new(init.m_x.clone(), init.m_s.clone());
    loop {
        if tap_residual(rbm, &state) < config.tolerance {
            state.converged = true;
            return Ok(state);
        }
        if state.iterations >= config.max_iterations {
            return Ok(state);
        }
        let fs = hidden_map(rbm, &state.m_x, &state.m_s);
        state.m_s = &fs * d + &state.m_s * (1.0 - d);
        let fx = visible_map(rbm, &state.m_x, &state.m_s);
        state.m_x = &fx * d + &state.m_x * (1.0 - d);
        state.iterations += 1;
    }
}

/// Starting points from clamped visible states: `m_x` is the state pulled
/// into the open cube and `m_s` the hidden conditional means.
pub fn tap_inits(rbm: &Rbm, visible: ArrayView2<f64>) -> Result<Vec<TapState>> {
    let hidden = rbm.hidden_means_batch(visible)?;
    Ok(visible
        .rows()
        .into_iter()
        .zip(hidden.rows())
        .map(|(x, s)| {
            TapState::new(
                x.mapv(|v| v.clamp(EDGE, 1.0 - EDGE)),
                s.mapv(|v| v.clamp(EDGE, 1.0 - EDGE)),
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapCount {
    pub distinct: usize,
    pub converged_runs: usize,
    pub unconverged_runs: usize,
    pub solutions: Vec<TapState>,
}

/// Solves from every init and counts converged solutions that differ by at
/// least `dedup_tol` in max norm (first-come representatives).
pub fn tap_count_solutions(rbm: &Rbm, inits: &[TapState], dedup_tol: f64, config: &TapConfig) -> Result<TapCount> {
    let mut solutions: Vec<TapState> = Vec::new();
    let (mut converged_runs, mut unconverged_runs) = (0, 0);
    for init in inits {
        let sol = tap_solve(rbm, init, config)?;
        if !sol.converged {
            unconverged_runs += 1;
            continue;
        }
        converged_runs += 1;
        if solutions.iter().all(|s| s.distance(&sol) >= dedup_tol) {
            solutions.push(sol);
        }
    }
    Ok(TapCount {
        distinct: solutions.len(),
        converged_runs,
        unconverged_runs,
        solutions,
    })
}

/// The bias transformation `c' = -c - W 1`, `b' = -b - W^T 1` under which a
/// solution `m` maps to `1 - m` (weights unchanged).
pub fn complement_biases(rbm: &Rbm) -> Rbm {
    let row_sums = rbm.weights.sum_axis(ndarray::Axis(1));
    let col_sums = rbm.weights.sum_axis(ndarray::Axis(0));
    Rbm {
        weights: rbm.weights.clone(),
        visible_bias: -&rbm.visible_bias - &row_sums,
        hidden_bias: -&rbm.hidden_bias - &col_sums,
    }
}
