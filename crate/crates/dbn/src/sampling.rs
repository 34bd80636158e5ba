//! Clamped (data-driven) and equilibrium (model-driven) layer samples.

use hfm::{EmpiricalSample, FeatureState};
use log::warn;
use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DbnError, Result};
use crate::model::Dbn;
use crate::rbm::bernoulli;

/// Converts 0/1 rows to feature states (column `j` is feature `j + 1`).
pub fn rows_to_sample(rows: ArrayView2<f64>) -> EmpiricalSample {
    let n = rows.ncols();
    let mut sample = EmpiricalSample::new(n);
    for row in rows.rows() {
        let bits: Vec<u8> = row.iter().map(|&v| (v > 0.5) as u8).collect();
        sample.push(FeatureState::from_bits(&bits)).expect("widths match");
    }
    sample
}

/// Stochastic upward pass of every row through layers `1..=l`, `passes` times.
/// Rows are ordered pass by pass.
pub fn clamped_states(dbn: &Dbn, data: ArrayView2<f64>, l: usize, passes: usize, seed: u64) -> Result<Array2<f64>> {
    dbn.check_layer(l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(passes);
    for _ in 0..passes {
        let mut s = data.to_owned();
        for rbm in &dbn.rbms()[..l] {
            s = rbm.sample_hidden(s.view(), &mut rng)?;
        }
        out.push(s);
    }
    if out.is_empty() {
        return Ok(Array2::zeros((0, dbn.width(l))));
    }
    let views: Vec<_> = out.iter().map(|a| a.view()).collect();
    Ok(concatenate(Axis(0), &views).expect("equal widths"))
}

pub fn clamped_sample(dbn: &Dbn, data: ArrayView2<f64>, l: usize, passes: usize, seed: u64) -> Result<EmpiricalSample> {
    Ok(rows_to_sample(clamped_states(dbn, data, l, passes, seed)?.view()))
}

/// Draws `p(layer k-1 | layer k)` for `k = from, from-1, ..., to+1`.
pub fn propagate_down<R: rand::Rng>(dbn: &Dbn, states: Array2<f64>, from: usize, to: usize, rng: &mut R) -> Result<Array2<f64>> {
    let mut s = states;
    for k in (to + 1..=from).rev() {
        s = dbn.rbms()[k - 1].sample_visible(s.view(), rng)?;
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumConfig {
    /// Sweeps discarded before collection starts.
    pub burn_in: usize,
    /// Sweeps between collected states.
    pub thin: usize,
    /// Independent chains, split into two groups for the diagnostic.
    pub chains: usize,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        Self {
            burn_in: 10_000,
            thin: 1,
            chains: 2,
        }
    }
}

/// Agreement of the mean top-layer activations of the two chain groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumDiagnostics {
    /// Largest `|mean_a - mean_b| / se` over units of both top-RBM layers.
    pub max_z: f64,
    pub converged: bool,
    pub sweeps: usize,
}

/// Z score above which the two chain groups are declared to disagree.
pub const CHAIN_AGREEMENT_Z: f64 = 3.0;

/// Equilibrium states of every layer `0..=L` from one run: block Gibbs
/// sampling of the top RBM, then ancestral propagation downward. Chain `c`
/// uses stream `c` of `seed`; the downward pass uses stream `chains`.
pub fn equilibrium_layers(
    dbn: &Dbn,
    n_samples: usize,
    config: &EquilibriumConfig,
    seed: u64,
) -> Result<(Vec<Array2<f64>>, EquilibriumDiagnostics)> {
    equilibrium_down_to(dbn, 0, n_samples, config, seed)
}

/// Equilibrium states of layer `l` (`0..=L`). Identical to entry `l` of
/// [`equilibrium_layers`] with the same arguments.
pub fn equilibrium_states(
    dbn: &Dbn,
    l: usize,
    n_samples: usize,
    config: &EquilibriumConfig,
    seed: u64,
) -> Result<(Array2<f64>, EquilibriumDiagnostics)> {
    let depth = dbn.depth();
    if l > depth {
        return Err(DbnError::Layer { layer: l, depth });
    }
    let (mut layers, diag) = equilibrium_down_to(dbn, l, n_samples, config, seed)?;
    Ok((layers.swap_remove(l), diag))
}

/// Layers `lowest..=L` are filled; lower entries are left empty.
fn equilibrium_down_to(
    dbn: &Dbn,
    lowest: usize,
    n_samples: usize,
    config: &EquilibriumConfig,
    seed: u64,
) -> Result<(Vec<Array2<f64>>, EquilibriumDiagnostics)> {
    let depth = dbn.depth();
    if config.chains < 2 || config.thin == 0 {
        return Err(DbnError::Config("equilibrium sampling needs at least 2 chains and thin >= 1".into()));
    }
    let top = dbn.top();
    let (m, n) = (top.visible_width(), top.hidden_width());
    let chains = config.chains;
    let per_chain = n_samples.div_ceil(chains);
    let mut rngs: Vec<ChaCha8Rng> = (0..chains)
        .map(|c| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(c as u64);
            r
        })
        .collect();
    let mut x: Vec<Array2<f64>> = rngs
        .iter_mut()
        .map(|r| bernoulli(&Array2::from_elem((1, m), 0.5), r))
        .collect();
    // per-chain collected joint states (visible | hidden of the top RBM)
    let mut collected: Vec<Vec<Array1<f64>>> = vec![Vec::with_capacity(per_chain); chains];
    let sweeps = config.burn_in + per_chain * config.thin;
    for sweep in 1..=sweeps {
        for c in 0..chains {
            let (_, xs) = top.gibbs_sweep(x[c].view(), &mut rngs[c])?;
            x[c] = xs;
            if sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0 {
                // pair the visible state with a hidden state drawn from it
                let hx = top.sample_hidden(x[c].view(), &mut rngs[c])?;
                let joint = concatenate(Axis(1), &[x[c].view(), hx.view()]).expect("one row each");
                collected[c].push(joint.row(0).to_owned());
            }
        }
    }
    let diagnostics = chain_diagnostics(&collected, sweeps);
    if !diagnostics.converged {
        warn!("equilibrium chains disagree: max z = {:.2}", diagnostics.max_z);
    }
    // interleave chains so that truncation to n_samples keeps them balanced
    let mut rows = Vec::with_capacity(n_samples);
    'outer: for t in 0..per_chain {
        for chain in &collected {
            if rows.len() == n_samples {
                break 'outer;
            }
            rows.push(chain[t].view());
        }
    }
    let mut joint = Array2::zeros((rows.len(), m + n));
    for (i, r) in rows.iter().enumerate() {
        joint.row_mut(i).assign(r);
    }
    let mut layers: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); depth + 1];
    layers[depth] = joint.slice(s![.., m..]).to_owned();
    if lowest < depth {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chains as u64);
        layers[depth - 1] = joint.slice(s![.., ..m]).to_owned();
        for k in (lowest + 1..depth).rev() {
            layers[k - 1] = dbn.rbms()[k - 1].sample_visible(layers[k].view(), &mut rng)?;
        }
    }
    Ok((layers, diagnostics))
}

fn chain_diagnostics(collected: &[Vec<Array1<f64>>], sweeps: usize) -> EquilibriumDiagnostics {
    let width = collected.iter().flatten().next().map_or(0, |r| r.len());
    let group = |parity: usize| -> (Array1<f64>, Array1<f64>, f64) {
        let rows: Vec<&Array1<f64>> = collected
            .iter()
            .enumerate()
            .filter(|(c, _)| c % 2 == parity)
            .flat_map(|(_, v)| v.iter())
            .collect();
        let count = rows.len() as f64;
        let mut mean = Array1::zeros(width);
        for r in &rows {
            mean += *r;
        }
        mean /= count.max(1.0);
        let var = mean.mapv(|p: f64| p * (1.0 - p));
        (mean, var, count)
    };
    let (ma, va, na) = group(0);
    let (mb, vb, nb) = group(1);
    let mut max_z: f64 = 0.0;
    for j in 0..width {
        let se = (va[j] / na + vb[j] / nb).sqrt();
        let diff = (ma[j] - mb[j]).abs();
        let z = if se > 0.0 {
            diff / se
        } else if diff > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        max_z = max_z.max(z);
    }
    EquilibriumDiagnostics {
        max_z,
        converged: max_z <= CHAIN_AGREEMENT_Z,
        sweeps,
    }
}

pub fn equilibrium_sample(
    dbn: &Dbn,
    l: usize,
    n_samples: usize,
    config: &EquilibriumConfig,
    seed: u64,
) -> Result<(EmpiricalSample, EquilibriumDiagnostics)> {
    let (states, diag) = equilibrium_states(dbn, l, n_samples, config, seed)?;
    Ok((rows_to_sample(states.view()), diag))
}

/// Visible-layer samples generated from the model's equilibrium.
pub fn generate(dbn: &Dbn, count: usize, config: &EquilibriumConfig, seed: u64) -> Result<(Array2<f64>, EquilibriumDiagnostics)> {
    equilibrium_states(dbn, 0, count, config, seed)
}
