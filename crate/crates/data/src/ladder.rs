//! Three training sets of equal size that differ in breadth: one digit class,
//! all digit classes, and digits together with a second character family.

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{mirror, Augmentation};
use crate::dataset::{binarize, check_preprocess, Dataset, Provenance};
use crate::error::{DataError, Result};
use crate::idx::RawImages;

/// Letters (or mirrored digits) are labelled from this offset upward.
pub const SECOND_FAMILY_OFFSET: u32 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderConfig {
    /// Rows in each of the three datasets.
    pub target_size: usize,
    /// Digit class of the narrow dataset.
    pub narrow_class: u8,
    pub augmentation: Augmentation,
    pub downsample: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            target_size: 10_000,
            narrow_class: 2,
            augmentation: Augmentation::default(),
            downsample: 2,
            threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ladder {
    pub narrow: Dataset,
    pub medium: Dataset,
    pub broad: Dataset,
}

impl Ladder {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &Dataset)> {
        [("narrow", &self.narrow), ("medium", &self.medium), ("broad", &self.broad)].into_iter()
    }
}

/// Resizes `pool` to exactly `target` rows: a random subset when the pool is
/// large enough, otherwise every image plus augmented copies of random ones.
fn fill<R: Rng>(
    pool: &[(Vec<u8>, u32)],
    side: usize,
    target: usize,
    augmentation: &Augmentation,
    rng: &mut R,
) -> (Vec<(Vec<u8>, u32)>, usize, usize) {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(rng);
    if pool.len() >= target {
        let rows = order[..target].iter().map(|&i| pool[i].clone()).collect();
        return (rows, target, 0);
    }
    let mut rows: Vec<(Vec<u8>, u32)> = order.iter().map(|&i| pool[i].clone()).collect();
    let extra = target - pool.len();
    for _ in 0..extra {
        let (img, label) = &pool[rng.random_range(0..pool.len())];
        rows.push((augmentation.apply(img, side, rng), *label));
    }
    rows.shuffle(rng);
    (rows, pool.len(), extra)
}

struct Rung<'a> {
    source: String,
    transforms: Vec<String>,
    pool: Vec<(Vec<u8>, u32)>,
    mirror_proxy: bool,
    config: &'a LadderConfig,
    stream: u64,
}

impl Rung<'_> {
    fn build(self, side: usize) -> Result<Dataset> {
        let c = self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(self.stream);
        let (rows, original, augmented) = fill(&self.pool, side, c.target_size, &c.augmentation, &mut rng);
        let mut transforms = self.transforms;
        if augmented > 0 {
            transforms.push(format!("{augmented} augmented copies: {}", c.augmentation.describe()));
        }
        transforms.push(format!(
            "block mean {0}x{0}, keep > {1} of 255",
            c.downsample, c.threshold
        ));
        let (images, labels): (Vec<Vec<u8>>, Vec<u32>) = rows
            .into_iter()
            .map(|(img, l)| (binarize(&img, side, side, c.downsample, c.threshold), l))
            .unzip();
        let provenance = Provenance {
            source: self.source,
            classes: Vec::new(),
            class_counts: Default::default(),
            transforms,
            threshold: c.threshold,
            downsample: c.downsample,
            side: side / c.downsample,
            original,
            augmented,
            mirror_proxy: self.mirror_proxy,
            seed: Some(c.seed),
        };
        Dataset::from_rows(&images, labels, provenance)
    }
}

fn pool_of(raw: &RawImages, offset: u32) -> Vec<(Vec<u8>, u32)> {
    raw.iter().map(|(img, l)| (img.to_vec(), l as u32 + offset)).collect()
}

/// Builds the narrow, medium and broad datasets. Without `letters` the broad
/// set pairs every digit with its mirror image and is flagged as a proxy.
pub fn breadth_ladder(
    digits: &RawImages,
    letters: Option<&RawImages>,
    config: &LadderConfig,
    source: &str,
) -> Result<Ladder> {
    if digits.rows != digits.cols {
        return Err(DataError::param("digits", "images must be square"));
    }
    let side = digits.rows;
    check_preprocess(side, side, config.downsample, config.threshold)?;
    if config.target_size == 0 {
        return Err(DataError::param("target_size", "must be positive"));
    }
    let narrow_raw = digits.filter(|l| l == config.narrow_class);
    if narrow_raw.is_empty() {
        return Err(DataError::Insufficient(format!("no images of class {}", config.narrow_class)));
    }
    let narrow = Rung {
        source: format!("{source} class {}", config.narrow_class),
        transforms: vec![format!("filter label == {}", config.narrow_class)],
        pool: pool_of(&narrow_raw, 0),
        mirror_proxy: false,
        config,
        stream: 0,
    }
    .build(side)?;
    let medium = Rung {
        source: source.to_string(),
        transforms: vec!["all digit classes".into()],
        pool: pool_of(digits, 0),
        mirror_proxy: false,
        config,
        stream: 1,
    }
    .build(side)?;
    let broad_rung = match letters {
        Some(l) => {
            if l.rows != side || l.cols != side {
                return Err(DataError::param("letters", "image size differs from the digits"));
            }
            let mut pool = pool_of(digits, 0);
            pool.extend(pool_of(l, SECOND_FAMILY_OFFSET));
            Rung {
                source: format!("{source} + letters"),
                transforms: vec![format!(
                    "digits and letters pooled at their natural balance; letters labelled from {SECOND_FAMILY_OFFSET}"
                )],
                pool,
                mirror_proxy: false,
                config,
                stream: 2,
            }
        }
        None => {
            let mut pool = pool_of(digits, 0);
            pool.extend(digits.iter().map(|(img, l)| (mirror(img, side), l as u32 + SECOND_FAMILY_OFFSET)));
            Rung {
                source: format!("{source} + mirrored digits (letter proxy)"),
                transforms: vec![format!(
                    "digits plus their left-right mirror images labelled from {SECOND_FAMILY_OFFSET}"
                )],
                pool,
                mirror_proxy: true,
                config,
                stream: 2,
            }
        }
    };
    let broad = broad_rung.build(side)?;
    info!(
        "breadth ladder: {} rows each, {} / {} / {} classes",
        config.target_size,
        narrow.distinct_labels(),
        medium.distinct_labels(),
        broad.distinct_labels()
    );
    Ok(Ladder { narrow, medium, broad })
}
