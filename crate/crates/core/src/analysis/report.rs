use serde::{Deserialize, Serialize};

use super::fit::{fit_g, hfm_kl_bits, kl_prefix_curve, optimize_permutation, GFit};
use super::gauge::{gauge_fix, GaugePerm};
use super::kendall::kendall_distance;
use super::peaks::{peak_decompose, PeakNode};
use crate::error::{HfmError, Result};
use crate::model::HfmParams;
use crate::sample::EmpiricalSample;

/// Leaves with fewer observations than this are flagged.
pub const LOW_STATISTICS_COUNT: u64 = 100;

/// How the reference coupling is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GStrategy {
    /// Maximum-likelihood fit per sample (one `g` for all prefixes).
    #[default]
    Fit,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub g_fit: f64,
    pub g_degenerate: bool,
    /// Relabelling taking the raw sample to HFM form.
    pub gauge: GaugePerm,
    /// `(prefix width, KL bits)` for prefixes `2..=n`.
    pub kl_curve: Vec<(usize, f64)>,
    /// KL to `h_n` over all features.
    pub kl_full: f64,
    /// `None` when the Kendall statistic is undefined.
    pub kendall_d: Option<f64>,
}

/// Gauge fixing, permutation search, `g` and the KL/Kendall diagnostics for
/// one sample. Also returns the relabelled sample.
pub fn analyze_sample(sample: &EmpiricalSample, strategy: GStrategy) -> Result<(FitResult, EmpiricalSample)> {
    let (flips, fixed) = gauge_fix(sample)?;
    let search_g = match strategy {
        GStrategy::Fit => 1.0,
        GStrategy::Fixed(g) => g,
    };
    let perm = optimize_permutation(&fixed, search_g)?;
    let gauge = perm.compose(&flips)?;
    let relabelled = perm.apply_sample(&fixed)?;
    let GFit { g, degenerate } = match strategy {
        GStrategy::Fit => fit_g(&relabelled)?,
        GStrategy::Fixed(g) => GFit { g, degenerate: false },
    };
    let params = HfmParams::new(sample.width(), g)?;
    let kl_curve = if sample.width() >= 2 {
        kl_prefix_curve(&relabelled, &params, sample.width())?
    } else {
        Vec::new()
    };
    let fit = FitResult {
        g_fit: g,
        g_degenerate: degenerate,
        gauge,
        kl_curve,
        kl_full: hfm_kl_bits(&relabelled, &params)?,
        kendall_d: kendall_distance(&relabelled).ok(),
    };
    Ok((fit, relabelled))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafReport {
    pub id: String,
    pub weight: f64,
    pub count: u64,
    pub distinct: usize,
    pub low_statistics: bool,
    pub entropy_plugin: f64,
    pub entropy_miller_madow: f64,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub leaves: Vec<LeafReport>,
    /// `sum_alpha w_alpha KL_alpha`.
    pub weighted_kl: f64,
}

/// Independent analysis of every leaf of a peak tree.
pub fn per_peak_report(tree: &PeakNode, strategy: GStrategy) -> Result<PeakReport> {
    let mut leaves = Vec::new();
    for (id, leaf) in tree.leaves() {
        let (fit, _) = analyze_sample(&leaf.members, strategy)?;
        leaves.push(LeafReport {
            id,
            weight: leaf.weight,
            count: leaf.members.total(),
            distinct: leaf.members.distinct(),
            low_statistics: leaf.members.total() < LOW_STATISTICS_COUNT,
            entropy_plugin: leaf.entropy_bits,
            entropy_miller_madow: leaf.members.miller_madow_entropy_bits(),
            fit,
        });
    }
    let weighted_kl = leaves.iter().map(|l| l.weight * l.fit.kl_full).sum();
    Ok(PeakReport { leaves, weighted_kl })
}

/// Serializable peak tree without member lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSummary {
    pub id: String,
    pub apex: String,
    pub weight: f64,
    pub count: u64,
    pub distinct: usize,
    pub entropy_bits: f64,
    pub children: Vec<PeakSummary>,
}

impl PeakSummary {
    pub fn new(node: &PeakNode) -> Self {
        Self::with_id(node, "0".into())
    }

    fn with_id(node: &PeakNode, id: String) -> Self {
        let children = node
            .children
            .iter()
            .enumerate()
            .map(|(k, c)| Self::with_id(c, format!("{id}.{}", k + 1)))
            .collect();
        Self {
            id,
            apex: node.apex.to_string(),
            weight: node.weight,
            count: node.members.total(),
            distinct: node.members.distinct(),
            entropy_bits: node.entropy_bits,
            children,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entropies {
    pub plugin: f64,
    pub miller_madow: f64,
}

/// Whole-layer analysis: the single-gauge fit plus the peak decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: String,
    pub n: usize,
    pub samples: u64,
    pub g_fit: f64,
    pub g_degenerate: bool,
    pub tau: Vec<u8>,
    /// 1-based.
    pub pi: Vec<usize>,
    pub kl_curve: Vec<(usize, f64)>,
    pub kl_full: f64,
    pub kendall_d: Option<f64>,
    pub entropies: Entropies,
    pub peak_tree: PeakSummary,
    pub peaks: PeakReport,
}

/// One CSV row per (layer, prefix width, peak); the whole-sample fit uses peak id `all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub layer: String,
    pub prefix_n: usize,
    pub peak_id: String,
    pub weight: f64,
    pub g: f64,
    pub kl_bits: f64,
}

impl LayerReport {
    pub fn build(layer: &str, sample: &EmpiricalSample, strategy: GStrategy, threshold: Option<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(HfmError::EmptySample);
        }
        let (fit, _) = analyze_sample(sample, strategy)?;
        let tree = peak_decompose(sample, threshold)?;
        let peaks = per_peak_report(&tree, strategy)?;
        Ok(Self {
            layer: layer.to_string(),
            n: sample.width(),
            samples: sample.total(),
            g_fit: fit.g_fit,
            g_degenerate: fit.g_degenerate,
            tau: fit.gauge.tau().iter().map(|&t| t as u8).collect(),
            pi: fit.gauge.pi().iter().map(|p| p + 1).collect(),
            kl_curve: fit.kl_curve,
            kl_full: fit.kl_full,
            kendall_d: fit.kendall_d,
            entropies: Entropies {
                plugin: sample.plugin_entropy_bits(),
                miller_madow: sample.miller_madow_entropy_bits(),
            },
            peak_tree: PeakSummary::new(&tree),
            peaks,
        })
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows: Vec<ReportRow> = self
            .kl_curve
            .iter()
            .map(|&(k, kl)| ReportRow {
                layer: self.layer.clone(),
                prefix_n: k,
                peak_id: "all".into(),
                weight: 1.0,
                g: self.g_fit,
                kl_bits: kl,
            })
            .collect();
        for leaf in &self.peaks.leaves {
            rows.extend(leaf.fit.kl_curve.iter().map(|&(k, kl)| ReportRow {
                layer: self.layer.clone(),
                prefix_n: k,
                peak_id: leaf.id.clone(),
                weight: leaf.weight,
                g: leaf.fit.g_fit,
                kl_bits: kl,
            }));
        }
        rows
    }
}
