//! Stacks of RBMs and their JSON file format.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{DbnError, Result};
use crate::rbm::Rbm;
use crate::train::TrainConfig;

/// A deep belief network: layer `l` (1-based) is the RBM between layers
/// `l - 1` and `l`, with layer 0 the visible data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dbn {
    layers: Vec<Rbm>,
}

impl Dbn {
    pub fn new(layers: Vec<Rbm>) -> Result<Self> {
        if layers.is_empty() {
            return Err(DbnError::Shape("a DBN needs at least one layer".into()));
        }
        for rbm in &layers {
            rbm.validate()?;
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].hidden_width() != pair[1].visible_width() {
                return Err(DbnError::Shape(format!(
                    "layer {} has {} hidden units but layer {} has {} visible units",
                    l + 1,
                    pair[0].hidden_width(),
                    l + 2,
                    pair[1].visible_width()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `(m, n_1, ..., n_L)`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].visible_width())
            .chain(self.layers.iter().map(Rbm::hidden_width))
            .collect()
    }

    /// Width of layer `l`, with `l = 0` the visible layer.
    pub fn width(&self, l: usize) -> usize {
        self.sizes()[l]
    }

    /// The RBM feeding layer `l`, for `l` in `1..=L`.
    pub fn rbm(&self, l: usize) -> Result<&Rbm> {
        self.check_layer(l)?;
        Ok(&self.layers[l - 1])
    }

    pub fn rbms(&self) -> &[Rbm] {
        &self.layers
    }

    pub fn top(&self) -> &Rbm {
        self.layers.last().expect("non-empty")
    }

    pub(crate) fn check_layer(&self, l: usize) -> Result<()> {
        if (1..=self.depth()).contains(&l) {
            Ok(())
        } else {
            Err(DbnError::Layer {
                layer: l,
                depth: self.depth(),
            })
        }
    }

    pub fn save_json(&self, path: &Path, train: Option<&TrainConfig>) -> Result<()> {
        let file = DbnFile::new(self, train);
        fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<(Self, Option<TrainConfig>)> {
        let file: DbnFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        file.into_model()
    }
}

pub const FORMAT_NAME: &str = "hfm-dbn";
pub const FORMAT_VERSION: u32 = 1;

/// On-disk form. Weight matrices are flattened row-major (visible index major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbnFile {
    pub format: String,
    pub version: u32,
    pub sizes: Vec<usize>,
    pub layers: Vec<LayerFile>,
    pub train_config: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub weights: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl DbnFile {
    pub fn new(dbn: &Dbn, train: Option<&TrainConfig>) -> Self {
        Self {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            sizes: dbn.sizes(),
            layers: dbn
                .layers
                .iter()
                .map(|r| LayerFile {
                    weights: r.weights.iter().copied().collect(),
                    visible_bias: r.visible_bias.to_vec(),
                    hidden_bias: r.hidden_bias.to_vec(),
                })
                .collect(),
            train_config: train.cloned(),
        }
    }

    pub fn into_model(self) -> Result<(Dbn, Option<TrainConfig>)> {
        if self.format != FORMAT_NAME || self.version != FORMAT_VERSION {
            return Err(DbnError::Config(format!(
                "unsupported model format {} v{}",
                self.format, self.version
            )));
        }
        if self.sizes.len() != self.layers.len() + 1 {
            return Err(DbnError::Shape("sizes do not match the number of layers".into()));
        }
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(l, layer)| {
                let (m, n) = (self.sizes[l], self.sizes[l + 1]);
                let weights = Array2::from_shape_vec((m, n), layer.weights)
                    .map_err(|e| DbnError::Shape(format!("layer {}: {e}", l + 1)))?;
                Rbm::new(weights, Array1::from(layer.visible_bias), Array1::from(layer.hidden_bias))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((Dbn::new(layers)?, self.train_config))
    }
}
