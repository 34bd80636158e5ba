//! Pipeline configuration (TOML). Unknown keys are rejected and everything is
//! validated before any work starts. Seeds are derived from the single global
//! `seed`, so sections carry no seeds of their own.

use std::path::{Path, PathBuf};

use hfm::analysis::GStrategy;
use hfm_data::augment::Augmentation;
use hfm_data::LadderConfig;
use hfm_dbn::sampling::EquilibriumConfig;
use hfm_dbn::tap::TapConfig;
use hfm_dbn::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const DATASETS: [&str; 3] = ["narrow", "medium", "broad"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` overrides it.
    pub out_dir: Option<PathBuf>,
    #[serde(default = "one")]
    pub jobs: usize,
    pub data: DataConfig,
    pub dbn: DbnConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub tap: TapSection,
    #[serde(default)]
    pub observables: ObservableConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    pub rg: Option<RgSweepConfig>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Procedurally drawn digits and letters.
    Synthetic,
    /// IDX files given by the path fields.
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub digits_images: Option<PathBuf>,
    pub digits_labels: Option<PathBuf>,
    pub letters_images: Option<PathBuf>,
    pub letters_labels: Option<PathBuf>,
    /// Synthetic source: images per class.
    #[serde(default = "default_per_class")]
    pub synthetic_per_class: usize,
    /// Synthetic source: include letters (otherwise the mirror proxy is used).
    #[serde(default = "yes")]
    pub synthetic_letters: bool,
    /// Subset of `narrow`, `medium`, `broad` to run.
    #[serde(default = "all_datasets")]
    pub datasets: Vec<String>,
    #[serde(default)]
    pub ladder: LadderSection,
}

fn default_per_class() -> usize {
    500
}

fn yes() -> bool {
    true
}

fn all_datasets() -> Vec<String> {
    DATASETS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderSection {
    pub target_size: usize,
    pub narrow_class: u8,
    pub augmentation: Augmentation,
    pub downsample: usize,
    pub threshold: f64,
}

impl Default for LadderSection {
    fn default() -> Self {
        let d = LadderConfig::default();
        Self {
            target_size: d.target_size,
            narrow_class: d.narrow_class,
            augmentation: d.augmentation,
            downsample: d.downsample,
            threshold: d.threshold,
        }
    }
}

impl LadderSection {
    pub fn to_config(&self, seed: u64) -> LadderConfig {
        LadderConfig {
            target_size: self.target_size,
            narrow_class: self.narrow_class,
            augmentation: self.augmentation.clone(),
            downsample: self.downsample,
            threshold: self.threshold,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbnConfig {
    /// Hidden layer sizes `n_1, ..., n_L`; the visible width follows from the data.
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub k_steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub n_chains: usize,
    pub init_scale: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            k_steps: d.k_steps,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            epochs: d.epochs,
            n_chains: d.n_chains,
            init_scale: d.init_scale,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            k_steps: self.k_steps,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            n_chains: self.n_chains,
            seed,
            init_scale: self.init_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// Upward passes per datapoint for clamped samples.
    pub passes: usize,
    /// Equilibrium samples per layer; defaults to the dataset size.
    pub equilibrium_samples: Option<usize>,
    pub equilibrium: EquilibriumConfig,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            passes: 1,
            equilibrium_samples: None,
            equilibrium: EquilibriumConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Layers wider than this are sampled but not analysed.
    pub max_width: usize,
    /// Peak threshold in bits of Hamming distance; default `n / 3`.
    pub peak_threshold: Option<f64>,
    pub g_strategy: GStrategy,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            max_width: 30,
            peak_threshold: None,
            g_strategy: GStrategy::Fit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TapSection {
    pub enabled: bool,
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub dedup_tol: f64,
    /// Clamped activations used as starting points, per layer.
    pub max_inits: usize,
}

impl Default for TapSection {
    fn default() -> Self {
        let d = TapConfig::default();
        Self {
            enabled: true,
            damping: d.damping,
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            dedup_tol: 0.01,
            max_inits: 1000,
        }
    }
}

impl TapSection {
    pub fn solver(&self) -> TapConfig {
        TapConfig {
            damping: self.damping,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservableConfig {
    pub enabled: bool,
    pub rollouts: usize,
    /// Datapoints propagated per layer.
    pub max_points: usize,
    pub bins: usize,
}

impl Default for ObservableConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            rollouts: 200,
            max_points: 500,
            bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    /// Compare sampled layer distributions with exact enumeration wherever
    /// the layer is at most `max_width` wide.
    pub enumeration: bool,
    pub max_width: usize,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            enumeration: true,
            max_width: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RgSweepConfig {
    pub n_values: Vec<usize>,
    pub g_values: Vec<f64>,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_rg_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_rg_tolerance")]
    pub tolerance: f64,
}

fn default_starts() -> usize {
    5
}

fn default_rg_iterations() -> usize {
    500
}

fn default_rg_tolerance() -> f64 {
    1e-10
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        // relative data paths are taken relative to the config file
        if let Some(base) = path.parent() {
            for p in [
                &mut config.data.digits_images,
                &mut config.data.digits_labels,
                &mut config.data.letters_images,
                &mut config.data.letters_labels,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    /// SHA-256 of the canonical JSON form, as hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }

    /// Visible width of the binarized images.
    pub fn visible_width(&self, image_side: usize) -> usize {
        let side = image_side / self.data.ladder.downsample;
        side * side
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(config_err("jobs must be positive"));
        }
        let d = &self.data;
        match d.source {
            DataSource::Idx => {
                for (name, p) in [("digits_images", &d.digits_images), ("digits_labels", &d.digits_labels)] {
                    match p {
                        None => return Err(config_err(format!("data.{name} is required for source = \"idx\""))),
                        Some(p) if !p.is_file() => {
                            return Err(config_err(format!("data.{name}: {} does not exist", p.display())))
                        }
                        _ => {}
                    }
                }
                if d.letters_images.is_some() != d.letters_labels.is_some() {
                    return Err(config_err("letters_images and letters_labels must be given together"));
                }
                for p in [&d.letters_images, &d.letters_labels].into_iter().flatten() {
                    if !p.is_file() {
                        return Err(config_err(format!("{} does not exist", p.display())));
                    }
                }
            }
            DataSource::Synthetic => {
                if d.synthetic_per_class == 0 {
                    return Err(config_err("data.synthetic_per_class must be positive"));
                }
                if d.digits_images.is_some() || d.letters_images.is_some() {
                    return Err(config_err("file paths are only used with source = \"idx\""));
                }
            }
        }
        if d.datasets.is_empty() {
            return Err(config_err("data.datasets is empty"));
        }
        for name in &d.datasets {
            if !DATASETS.contains(&name.as_str()) {
                return Err(config_err(format!("unknown dataset {name:?}")));
            }
        }
        let l = &d.ladder;
        if l.target_size == 0 {
            return Err(config_err("ladder.target_size must be positive"));
        }
        if l.downsample == 0 || 28 % l.downsample != 0 && d.source == DataSource::Synthetic {
            return Err(config_err("ladder.downsample must divide 28"));
        }
        if !(l.threshold > 0.0 && l.threshold < 1.0) {
            return Err(config_err("ladder.threshold must lie in (0, 1)"));
        }
        if self.dbn.hidden.is_empty() || self.dbn.hidden.contains(&0) {
            return Err(config_err("dbn.hidden must list positive layer sizes"));
        }
        self.dbn
            .train
            .to_config(0)
            .validate()
            .map_err(|e| config_err(format!("dbn.train: {e}")))?;
        let eq = &self.sampling.equilibrium;
        if self.sampling.passes == 0 || eq.chains < 2 || eq.thin == 0 {
            return Err(config_err("sampling needs passes >= 1, chains >= 2 and thin >= 1"));
        }
        if let GStrategy::Fixed(g) = self.analysis.g_strategy {
            if !(g > 0.0) {
                return Err(config_err("analysis.g_strategy fixed g must be positive"));
            }
        }
        if let Some(t) = self.analysis.peak_threshold {
            if !(t >= 0.0) {
                return Err(config_err("analysis.peak_threshold must be non-negative"));
            }
        }
        self.tap
            .solver()
            .validate()
            .map_err(|e| config_err(format!("tap: {e}")))?;
        if !(self.tap.dedup_tol > 0.0) {
            return Err(config_err("tap.dedup_tol must be positive"));
        }
        let o = &self.observables;
        if o.enabled && (o.rollouts == 0 || o.bins == 0) {
            return Err(config_err("observables need rollouts >= 1 and bins >= 1"));
        }
        if let Some(rg) = &self.rg {
            if rg.n_values.iter().any(|&n| !(2..=hfm::dist::MAX_DENSE_WIDTH).contains(&n)) {
                return Err(config_err("rg.n_values must lie in 2..=20"));
            }
            if rg.g_values.iter().any(|&g| !(g > hfm::G_CRITICAL)) {
                return Err(config_err("rg.g_values must exceed ln 2"));
            }
            if rg.starts == 0 || !(rg.tolerance > 0.0) {
                return Err(config_err("rg needs starts >= 1 and a positive tolerance"));
            }
        }
        Ok(())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Independent seed for a named stage of the run.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [data]
        source = "synthetic"
        [dbn]
        hidden = [4, 3]
    "#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.dbn.train.k_steps, 10);
        assert_eq!(c.data.datasets.len(), 3);
        assert_eq!(c.tap.dedup_tol, 0.01);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[analysis]\nmax_widht = 3\n");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Config(_))));
        let text = MINIMAL.replace("[dbn]", "[dbn]\ntrain = { seed = 4 }");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn idx_source_needs_existing_files() {
        let text = MINIMAL.replace("\"synthetic\"", "\"idx\"\ndigits_images = \"/nonexistent/a\"\ndigits_labels = \"/nonexistent/b\"");
        let c = ExperimentConfig::from_toml(&text).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
    }
}
