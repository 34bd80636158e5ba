//! Persistent contrastive divergence and greedy layer-wise stacking.

use log::{debug, info};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DbnError, Result};
use crate::model::Dbn;
use crate::rbm::{bernoulli, Rbm};

/// Training aborts once the mean absolute weight exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

/// Rows used for the per-epoch pseudo-likelihood estimate.
const PSEUDO_LIKELIHOOD_ROWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Gibbs sweeps of the persistent chains per update.
    pub k_steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Standard deviation of the initial weights.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k_steps: 10,
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 20,
            n_chains: 64,
            seed: 0,
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k_steps", self.k_steps),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("n_chains", self.n_chains),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(DbnError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(DbnError::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(DbnError::Config("init_scale must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// A parameter-shaped vector: a log-likelihood gradient or sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

impl Gradient {
    /// `<x s^T>`, `<x>` and `<s>` with the hidden units Rao-Blackwellized.
    pub fn statistics(rbm: &Rbm, x: ArrayView2<f64>) -> Result<Self> {
        let h = rbm.hidden_means_batch(x)?;
        let rows = x.nrows() as f64;
        Ok(Self {
            weights: x.t().dot(&h) / rows,
            visible_bias: x.mean_axis(Axis(0)).expect("non-empty"),
            hidden_bias: h.mean_axis(Axis(0)).expect("non-empty"),
        })
    }

    pub fn minus(&self, other: &Self) -> Self {
        Self {
            weights: &self.weights - &other.weights,
            visible_bias: &self.visible_bias - &other.visible_bias,
            hidden_bias: &self.hidden_bias - &other.hidden_bias,
        }
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = self.minus(other);
        d.weights
            .iter()
            .chain(&d.visible_bias)
            .chain(&d.hidden_bias)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn apply(&self, rbm: &mut Rbm, rate: f64) {
        rbm.weights.scaled_add(rate, &self.weights);
        rbm.visible_bias.scaled_add(rate, &self.visible_bias);
        rbm.hidden_bias.scaled_add(rate, &self.hidden_bias);
    }
}

/// PCD estimate of the log-likelihood gradient: data statistics of `batch`
/// minus model statistics of `chains` after `k` further Gibbs sweeps.
pub fn pcd_gradient<R: Rng>(
    rbm: &Rbm,
    batch: ArrayView2<f64>,
    chains: &mut Array2<f64>,
    k: usize,
    rng: &mut R,
) -> Result<Gradient> {
    let positive = Gradient::statistics(rbm, batch)?;
    for _ in 0..k {
        let (_, x) = rbm.gibbs_sweep(chains.view(), rng)?;
        *chains = x;
    }
    let negative = Gradient::statistics(rbm, chains.view())?;
    Ok(positive.minus(&negative))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Stochastic pseudo-likelihood proxy: mean of `m ln sigmoid(F(x~) - F(x))`
    /// with one random bit of each row flipped.
    pub pseudo_likelihood: f64,
    /// Mean gradient norm over the epoch's batches.
    pub grad_norm: f64,
}

pub fn pseudo_likelihood<R: Rng>(rbm: &Rbm, data: ArrayView2<f64>, rng: &mut R) -> f64 {
    let m = rbm.visible_width();
    let rows = data.nrows().min(PSEUDO_LIKELIHOOD_ROWS);
    let mut total = 0.0;
    for x in data.rows().into_iter().take(rows) {
        let mut flipped = x.to_owned();
        let i = rng.random_range(0..m);
        flipped[i] = 1.0 - flipped[i];
        let delta = rbm.free_energy_visible(flipped.view()) - rbm.free_energy_visible(x);
        total += m as f64 * -crate::rbm::softplus(-delta);
    }
    total / rows.max(1) as f64
}

fn check_binary(data: ArrayView2<f64>) -> Result<()> {
    if data.nrows() == 0 {
        return Err(DbnError::Shape("empty training data".into()));
    }
    if data.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(DbnError::Shape("training data must be 0/1".into()));
    }
    Ok(())
}

/// Visible biases at the log-odds of the data means, the usual starting point.
fn initial_rbm<R: Rng>(data: ArrayView2<f64>, hidden: usize, config: &TrainConfig, rng: &mut R) -> Rbm {
    let mut rbm = Rbm::random(data.ncols(), hidden, config.init_scale, rng);
    let means = data.mean_axis(Axis(0)).expect("non-empty");
    rbm.visible_bias = means.mapv(|p| {
        let p = p.clamp(1e-3, 1.0 - 1e-3);
        (p / (1.0 - p)).ln()
    });
    rbm
}

/// Trains an RBM with `hidden` units by PCD-k from a seeded initialization.
pub fn train_rbm(data: ArrayView2<f64>, hidden: usize, config: &TrainConfig) -> Result<(Rbm, Vec<EpochLog>)> {
    config.validate()?;
    check_binary(data)?;
    if hidden == 0 {
        return Err(DbnError::Config("hidden layer must have at least one unit".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rbm = initial_rbm(data, hidden, config, &mut rng);
    train_rbm_from(rbm, data, config, &mut rng)
}

/// PCD-k starting from given parameters. Chains start at random data rows and
/// persist across batches and epochs.
pub fn train_rbm_from<R: Rng>(
    mut rbm: Rbm,
    data: ArrayView2<f64>,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(Rbm, Vec<EpochLog>)> {
    config.validate()?;
    check_binary(data)?;
    rbm.validate()?;
    if data.ncols() != rbm.visible_width() {
        return Err(DbnError::Shape(format!(
            "data width {} does not match {} visible units",
            data.ncols(),
            rbm.visible_width()
        )));
    }
    let starts: Vec<usize> = (0..config.n_chains).map(|_| rng.random_range(0..data.nrows())).collect();
    let mut chains = data.select(Axis(0), &starts);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let mut norm_sum = 0.0;
        let mut batches = 0;
        for idx in order.chunks(config.batch_size) {
            let batch = data.select(Axis(0), idx);
            let grad = pcd_gradient(&rbm, batch.view(), &mut chains, config.k_steps, rng)?;
            norm_sum += grad.norm();
            batches += 1;
            grad.apply(&mut rbm, config.learning_rate);
        }
        let mean_abs_weight = rbm.mean_abs_weight();
        if !(mean_abs_weight <= DIVERGENCE_LIMIT) {
            return Err(DbnError::Diverged { epoch, mean_abs_weight });
        }
        let entry = EpochLog {
            epoch,
            pseudo_likelihood: pseudo_likelihood(&rbm, data, rng),
            grad_norm: norm_sum / batches as f64,
        };
        debug!("epoch {epoch}: pl {:.4} |grad| {:.4}", entry.pseudo_likelihood, entry.grad_norm);
        log.push(entry);
    }
    Ok((rbm, log))
}

/// Seed for layer `l` (1-based); layer 1 uses the configured seed itself.
pub fn layer_seed(seed: u64, l: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(l as u64 - 1))
}

/// Greedy layer-wise training: layer `l` is trained on stochastic samples of
/// layer `l - 1` given the data. `sizes = (m, n_1, ..., n_L)`.
pub fn train_dbn(data: ArrayView2<f64>, sizes: &[usize], config: &TrainConfig) -> Result<(Dbn, Vec<Vec<EpochLog>>)> {
    if sizes.len() < 2 {
        return Err(DbnError::Config("sizes must list the visible width and at least one hidden layer".into()));
    }
    if sizes[0] != data.ncols() {
        return Err(DbnError::Shape(format!(
            "sizes[0] = {} but the data has {} columns",
            sizes[0],
            data.ncols()
        )));
    }
    let mut propagate = ChaCha8Rng::seed_from_u64(config.seed);
    propagate.set_stream(1);
    let mut layers = Vec::new();
    let mut logs = Vec::new();
    let mut current = data.to_owned();
    for (l, &hidden) in sizes.iter().enumerate().skip(1) {
        let layer_config = TrainConfig {
            seed: layer_seed(config.seed, l),
            ..config.clone()
        };
        let (rbm, log) = train_rbm(current.view(), hidden, &layer_config)?;
        info!(
            "layer {l}: {}x{hidden}, final pseudo-likelihood {:.3}",
            sizes[l - 1],
            log.last().map_or(f64::NAN, |e| e.pseudo_likelihood)
        );
        if l + 1 < sizes.len() {
            current = bernoulli(&rbm.hidden_means_batch(current.view())?, &mut propagate);
        }
        layers.push(rbm);
        logs.push(log);
    }
    Ok((Dbn::new(layers)?, logs))
}
