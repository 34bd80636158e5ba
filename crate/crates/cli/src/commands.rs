//! The `hfm`, `rg` and `data` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use hfm::model::relevance;
use hfm::rg::{
    self, analytic_fixed_point, fixed_point_alpha, Direction, RgConfig, TransitionMatrix, DIRECT_SOLVE_MAX_WIDTH,
};
use hfm::{DenseDistribution, FeatureState, HfmParams, G_CRITICAL};
use hfm_data::glyphs::{self, Family, Style};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::derive_seed;
use crate::error::{CliError, Result};
use crate::output::csv_bytes;

/// Largest width for which `probe` lists every state.
pub const PROBE_LIST_WIDTH: usize = 12;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn check_hfm_args(n: usize, g: f64) -> Result<()> {
    if n == 0 || n > hfm::dist::MAX_DENSE_WIDTH {
        return Err(usage(format!("n must lie in 1..={}", hfm::dist::MAX_DENSE_WIDTH)));
    }
    if !(g > 0.0) || !g.is_finite() {
        return Err(usage("g must be a positive number"));
    }
    Ok(())
}

fn check_rg_g(g: f64) -> Result<()> {
    if !(g > G_CRITICAL) || !g.is_finite() {
        return Err(usage(format!("the fixed point exists only for g > ln 2 = {G_CRITICAL:.6}")));
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateProb {
    pub state: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub n: usize,
    pub g: f64,
    pub xi: f64,
    pub partition: f64,
    pub entropy_bits: f64,
    pub relevance_bits: f64,
    pub mean_level: f64,
    /// `P(m_s = m)` for `m = 0..=n`.
    pub level_mass: Vec<f64>,
    /// Every state, dense order; omitted above `PROBE_LIST_WIDTH`.
    pub probabilities: Option<Vec<StateProb>>,
}

pub fn probe(n: usize, g: f64) -> Result<Probe> {
    check_hfm_args(n, g)?;
    let params = HfmParams::new(n, g)?;
    let dense = params.dense()?;
    let probabilities = (n <= PROBE_LIST_WIDTH).then(|| {
        dense
            .probs()
            .iter()
            .enumerate()
            .map(|(i, &p)| StateProb {
                state: FeatureState::from_index(i as u64, n).to_string(),
                prob: p,
            })
            .collect()
    });
    Ok(Probe {
        n,
        g,
        xi: params.xi(),
        partition: params.partition(),
        entropy_bits: params.entropy_bits(),
        relevance_bits: relevance(&dense),
        mean_level: params.mean_level(),
        level_mass: (0..=n).map(|m| params.level_mass(m)).collect(),
        probabilities,
    })
}

/// Writes `count` HFM draws in the sample text format. Zero draws give an
/// empty file.
pub fn sample(n: usize, g: f64, count: usize, seed: u64, path: &Path) -> Result<()> {
    check_hfm_args(n, g)?;
    let params = HfmParams::new(n, g)?;
    let mut bytes = Vec::new();
    if count > 0 {
        params.sample(count, seed).write_text(&mut bytes)?;
    }
    write_file(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub level: usize,
    pub coding_cost_bits: f64,
    pub states: f64,
    pub level_mass: f64,
}

/// Degeneracy CSV; returns the fitted exponent `nu`.
pub fn spectrum(n: usize, g: f64, path: &Path) -> Result<Option<f64>> {
    check_hfm_args(n, g)?;
    let params = HfmParams::new(n, g)?;
    let spec = params.degeneracy_spectrum();
    let rows: Vec<SpectrumRow> = spec
        .levels
        .iter()
        .map(|l| SpectrumRow {
            level: l.level,
            coding_cost_bits: l.coding_cost_bits,
            states: l.states,
            level_mass: params.level_mass(l.level),
        })
        .collect();
    write_file(path, &csv_bytes(&rows)?)?;
    Ok(spec.nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    /// Flat-Dirichlet random distribution.
    Random,
    /// The analytic fixed point for `g`.
    FixedPoint,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateArgs {
    pub n: usize,
    pub g: Option<f64>,
    pub target_entropy: Option<f64>,
    pub start: Start,
    pub direction: Direction,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

/// Per-run JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateReport {
    pub n: usize,
    pub g: Option<f64>,
    pub target_entropy: f64,
    pub direction: Direction,
    pub start: Start,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    /// Last `alpha` (coarse) or `q` (fine).
    pub alpha_final: Option<f64>,
    /// `1 - xi` when `g` is given.
    pub alpha_expected: Option<f64>,
    pub final_distance: Option<f64>,
    /// Total variation to the analytic fixed point when `g` is given.
    pub distance_to_analytic: Option<f64>,
    pub alpha_trace: Vec<f64>,
    pub tv_trace: Vec<f64>,
    pub fixed_point: DenseDistribution,
}

/// Random starts are tempered to `target` bits when one is given, which keeps
/// the first entropy-matching solve within reach: `H(p) <= H(p_{1:n-1}) + 1`.
fn start_distribution(n: usize, g: Option<f64>, start: Start, target: Option<f64>, seed: u64) -> Result<DenseDistribution> {
    Ok(match start {
        Start::Random => {
            let p = DenseDistribution::random_dirichlet(n, &mut ChaCha8Rng::seed_from_u64(seed))?;
            match target {
                Some(h) => p.tempered_to_entropy(h, ENTROPY_MATCH_TOLERANCE)?,
                None => p,
            }
        }
        Start::Uniform => DenseDistribution::uniform(n)?,
        Start::FixedPoint => {
            let g = g.ok_or_else(|| usage("--start fixed-point needs --g"))?;
            analytic_fixed_point(n, g)?
        }
    })
}

/// Entropy accuracy of tempered random starts, in bits.
pub const ENTROPY_MATCH_TOLERANCE: f64 = 1e-12;

pub fn iterate(args: &IterateArgs) -> Result<IterateReport> {
    let n = args.n;
    if !(2..=hfm::dist::MAX_DENSE_WIDTH).contains(&n) {
        return Err(usage(format!("n must lie in 2..={}", hfm::dist::MAX_DENSE_WIDTH)));
    }
    if let Some(g) = args.g {
        check_rg_g(g)?;
    }
    if !(args.tolerance > 0.0) {
        return Err(usage("tolerance must be positive"));
    }
    let reference = args.g.map(|g| analytic_fixed_point(n, g)).transpose()?;
    let matched = args.target_entropy.or_else(|| reference.as_ref().map(|r| r.entropy_bits()));
    if let Some(h) = matched {
        if !(h > 0.0 && h < n as f64) {
            return Err(usage(format!("target entropy must lie in (0, {n}) bits")));
        }
    }
    let p0 = start_distribution(n, args.g, args.start, matched, args.seed)?;
    let target = matched.unwrap_or_else(|| p0.entropy_bits());
    if args.direction == Direction::Coarse && !(target > 1.0) {
        return Err(usage("the coarse step needs a target entropy above 1 bit"));
    }
    let config = RgConfig {
        target_entropy: Some(target),
        max_iterations: args.max_iterations,
        convergence_tolerance: args.tolerance,
        ..RgConfig::default()
    };
    let (p, diag) = rg::iterate_to_fixed_point(&p0, &config, args.direction)?;
    let distance_to_analytic = reference.as_ref().map(|r| p.total_variation(r)).transpose()?;
    Ok(IterateReport {
        n,
        g: args.g,
        target_entropy: target,
        direction: args.direction,
        start: args.start,
        seed: args.seed,
        converged: diag.converged,
        iterations: diag.iterations,
        alpha_final: diag.alpha_trace.last().copied(),
        alpha_expected: args.g.map(fixed_point_alpha),
        final_distance: diag.distance_trace.last().copied(),
        distance_to_analytic,
        alpha_trace: diag.alpha_trace,
        tv_trace: diag.distance_trace,
        fixed_point: p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub g: f64,
    pub start: usize,
    pub target_entropy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_distance: f64,
    pub tv_to_fixed_point: f64,
    pub alpha_final: f64,
    pub alpha_expected: f64,
}

const SWEEP_HEADER: [&str; 10] = [
    "n",
    "g",
    "start",
    "target_entropy",
    "iterations",
    "converged",
    "final_distance",
    "tv_to_fixed_point",
    "alpha_final",
    "alpha_expected",
];

/// Coarse-direction runs from `starts` random distributions per `(n, g)`,
/// each tempered to the entropy of the fixed point. Rows come out in grid order.
pub fn sweep(
    n_values: &[usize],
    g_values: &[f64],
    starts: usize,
    max_iterations: usize,
    tolerance: f64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    for &n in n_values {
        if !(2..=hfm::dist::MAX_DENSE_WIDTH).contains(&n) {
            return Err(usage(format!("n = {n} is outside 2..={}", hfm::dist::MAX_DENSE_WIDTH)));
        }
    }
    for &g in g_values {
        check_rg_g(g)?;
    }
    let jobs: Vec<(usize, f64, usize)> = n_values
        .iter()
        .flat_map(|&n| g_values.iter().flat_map(move |&g| (0..starts).map(move |k| (n, g, k))))
        .collect();
    jobs.par_iter()
        .map(|&(n, g, k)| {
            let reference = analytic_fixed_point(n, g)?;
            let target = reference.entropy_bits();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("rg/{n}/{g}/{k}")));
            let p0 = DenseDistribution::random_dirichlet(n, &mut rng)?.tempered_to_entropy(target, ENTROPY_MATCH_TOLERANCE)?;
            let config = RgConfig {
                target_entropy: Some(target),
                max_iterations,
                convergence_tolerance: tolerance,
                ..RgConfig::default()
            };
            let (p, diag) = rg::iterate_to_fixed_point(&p0, &config, Direction::Coarse)?;
            Ok(SweepRow {
                n,
                g,
                start: k,
                target_entropy: target,
                iterations: diag.iterations,
                converged: diag.converged,
                final_distance: diag.distance_trace.last().copied().unwrap_or(f64::NAN),
                tv_to_fixed_point: p.total_variation(&reference)?,
                alpha_final: diag.alpha_trace.last().copied().unwrap_or(f64::NAN),
                alpha_expected: fixed_point_alpha(g),
            })
        })
        .collect()
}

/// Sweep CSV; the header is written even when there are no rows.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryRow {
    pub index: usize,
    pub state: String,
    pub prob: f64,
    pub analytic: Option<f64>,
}

/// Writes `transition.csv` (dense `T`, row = source state) and
/// `stationary.csv` into `dir`; returns the stationary vector.
pub fn matrix(n: usize, alpha: Option<f64>, g: Option<f64>, dir: &Path) -> Result<DenseDistribution> {
    if !(1..=12).contains(&n) {
        return Err(usage("n must lie in 1..=12 for a dense matrix dump"));
    }
    if let Some(g) = g {
        check_rg_g(g)?;
    }
    let alpha = match (alpha, g) {
        (Some(a), _) => a,
        (None, Some(g)) => fixed_point_alpha(g),
        (None, None) => return Err(usage("give --alpha or --g")),
    };
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(usage("alpha must lie in (0, 1]"));
    }
    let t = TransitionMatrix::new(n, alpha)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in t.dense() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&dir.join("transition.csv"), &bytes)?;
    let stationary = if n <= DIRECT_SOLVE_MAX_WIDTH {
        t.stationary_direct()?
    } else {
        t.stationary(1e-15, 1_000_000)
    };
    let analytic = g.map(|g| analytic_fixed_point(n, g)).transpose()?;
    let rows: Vec<StationaryRow> = stationary
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| StationaryRow {
            index: i,
            state: FeatureState::from_index(i as u64, n).to_string(),
            prob: p,
            analytic: analytic.as_ref().map(|a| a.probs()[i]),
        })
        .collect();
    write_file(&dir.join("stationary.csv"), &csv_bytes(&rows)?)?;
    Ok(stationary)
}

/// Procedural glyphs as an IDX pair; returns the two paths.
pub fn synth(family: Family, per_class: usize, seed: u64, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if per_class == 0 {
        return Err(usage("per-class must be positive"));
    }
    let name = match family {
        Family::Digits => "digits",
        Family::Letters => "letters",
    };
    let raw = glyphs::synthesize(family, per_class, &Style::default(), seed);
    fs::create_dir_all(dir)?;
    let images = dir.join(format!("{name}-images.idx"));
    let labels = dir.join(format!("{name}-labels.idx"));
    raw.write(&images, &labels)?;
    Ok((images, labels))
}
