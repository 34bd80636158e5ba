//! Binary datasets and their on-disk form: the shared state text format (one
//! row per line, in order), a label file and a JSON provenance sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hfm::{EmpiricalSample, FeatureState};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::idx::RawImages;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// Where the images came from, e.g. a file path or `synthetic:digits`.
    pub source: String,
    pub classes: Vec<u32>,
    pub class_counts: BTreeMap<u32, usize>,
    /// Human-readable description of every transform applied, in order.
    pub transforms: Vec<String>,
    /// Fraction of the maximum intensity (255) a block mean must exceed.
    pub threshold: f64,
    pub downsample: usize,
    /// Side of the binarized square image.
    pub side: usize,
    /// Source images used as-is.
    pub original: usize,
    /// Rows produced by augmentation.
    pub augmented: usize,
    /// True when the broad set substitutes mirrored digits for letters.
    pub mirror_proxy: bool,
    pub seed: Option<u64>,
}

/// `N x m` binary images (rows are row-major `side x side` images) with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Array2<f64>,
    pub labels: Vec<u32>,
    pub provenance: Provenance,
}

/// Block-averages `downsample x downsample` tiles and keeps the tiles whose
/// mean intensity exceeds `threshold * 255`.
pub fn binarize(image: &[u8], rows: usize, cols: usize, downsample: usize, threshold: f64) -> Vec<u8> {
    let (r, c) = (rows / downsample, cols / downsample);
    let cutoff = threshold * 255.0 * (downsample * downsample) as f64;
    let mut out = vec![0u8; r * c];
    for by in 0..r {
        for bx in 0..c {
            let mut sum = 0u32;
            for y in by * downsample..(by + 1) * downsample {
                for x in bx * downsample..(bx + 1) * downsample {
                    sum += image[y * cols + x] as u32;
                }
            }
            out[by * c + bx] = (sum as f64 > cutoff) as u8;
        }
    }
    out
}

pub(crate) fn check_preprocess(rows: usize, cols: usize, downsample: usize, threshold: f64) -> Result<()> {
    if downsample == 0 || rows % downsample != 0 || cols % downsample != 0 {
        return Err(DataError::param(
            "downsample",
            format!("{downsample} does not divide the {rows}x{cols} image"),
        ));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(DataError::param("threshold", "must lie in (0, 1)"));
    }
    Ok(())
}

/// Downsamples and binarizes every image.
pub fn preprocess(raw: &RawImages, downsample: usize, threshold: f64) -> Result<Dataset> {
    check_preprocess(raw.rows, raw.cols, downsample, threshold)?;
    if raw.is_empty() {
        return Err(DataError::Insufficient("no images".into()));
    }
    let rows: Vec<Vec<u8>> = raw
        .iter()
        .map(|(img, _)| binarize(img, raw.rows, raw.cols, downsample, threshold))
        .collect();
    let labels: Vec<u32> = raw.labels.iter().map(|&l| l as u32).collect();
    let provenance = Provenance {
        source: "raw".into(),
        classes: Vec::new(),
        class_counts: BTreeMap::new(),
        transforms: vec![format!("block mean {downsample}x{downsample}, keep > {threshold} of 255")],
        threshold,
        downsample,
        side: raw.rows / downsample,
        original: raw.len(),
        augmented: 0,
        mirror_proxy: false,
        seed: None,
    };
    Dataset::from_rows(&rows, labels, provenance)
}

impl Dataset {
    /// Builds a dataset from 0/1 rows, filling in the class summary.
    pub fn from_rows(rows: &[Vec<u8>], labels: Vec<u32>, mut provenance: Provenance) -> Result<Self> {
        if rows.is_empty() {
            return Err(DataError::Insufficient("empty dataset".into()));
        }
        if rows.len() != labels.len() {
            return Err(DataError::param("labels", "one label per row required"));
        }
        let width = rows[0].len();
        let mut images = Array2::zeros((rows.len(), width));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width || row.iter().any(|&v| v > 1) {
                return Err(DataError::Format(format!("row {i} is not a 0/1 row of width {width}")));
            }
            for (j, &v) in row.iter().enumerate() {
                images[[i, j]] = v as f64;
            }
        }
        let mut counts = BTreeMap::new();
        for &l in &labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        provenance.classes = counts.keys().copied().collect();
        provenance.class_counts = counts;
        Ok(Self {
            images,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of pixels per row.
    pub fn width(&self) -> usize {
        self.images.ncols()
    }

    pub fn distinct_labels(&self) -> usize {
        self.provenance.class_counts.len()
    }

    pub fn to_sample(&self) -> EmpiricalSample {
        let mut sample = EmpiricalSample::new(self.width());
        for row in self.images.rows() {
            let bits: Vec<u8> = row.iter().map(|&v| v as u8).collect();
            sample.push(FeatureState::from_bits(&bits)).expect("uniform width");
        }
        sample
    }

    /// Writes `<name>.txt`, `<name>.labels` and `<name>.provenance.json` into
    /// `dir` and returns their paths.
    pub fn save(&self, dir: &Path, name: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let rows_path = dir.join(format!("{name}.txt"));
        let labels_path = dir.join(format!("{name}.labels"));
        let prov_path = dir.join(format!("{name}.provenance.json"));
        let mut out = BufWriter::new(fs::File::create(&rows_path)?);
        writeln!(out, "# dataset={name} rows={} n={}", self.len(), self.width())?;
        for row in self.images.rows() {
            let line: String = row.iter().map(|&v| if v > 0.5 { '1' } else { '0' }).collect();
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        let labels: String = self.labels.iter().map(|l| format!("{l}\n")).collect();
        fs::write(&labels_path, labels)?;
        fs::write(&prov_path, serde_json::to_string_pretty(&self.provenance)?)?;
        Ok(vec![rows_path, labels_path, prov_path])
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let rows_file = BufReader::new(fs::File::open(dir.join(format!("{name}.txt")))?);
        let mut rows = Vec::new();
        for line in rows_file.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Vec<u8> = line
                .bytes()
                .map(|b| match b {
                    b'0' => Ok(0),
                    b'1' => Ok(1),
                    _ => Err(DataError::Format(format!("unexpected byte {b:#x}"))),
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        let labels = fs::read_to_string(dir.join(format!("{name}.labels")))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<u32>().map_err(|e| DataError::Format(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let provenance: Provenance =
            serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.provenance.json")))?)?;
        Dataset::from_rows(&rows, labels, provenance)
    }
}
