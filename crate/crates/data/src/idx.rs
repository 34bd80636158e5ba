//! The IDX container used by MNIST-style datasets: a big-endian header with a
//! magic number (`0x00000803` for u8 images, `0x00000801` for u8 labels) and
//! one u32 per dimension, followed by the raw bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{DataError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Grayscale images (0 = background) with one label each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImages {
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels of all images, `len = count * rows * cols`.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawImages {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(DataError::param("rows/cols", "image dimensions must be positive"));
        }
        if pixels.len() != labels.len() * rows * cols {
            return Err(DataError::Idx(format!(
                "{} pixels for {} images of {rows}x{cols}",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.pixels_per_image();
        &self.pixels[i * size..(i + 1) * size]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], u8)> {
        self.pixels.chunks_exact(self.pixels_per_image()).zip(self.labels.iter().copied())
    }

    /// Images whose label satisfies `keep`, in source order.
    pub fn filter(&self, keep: impl Fn(u8) -> bool) -> Self {
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for (img, label) in self.iter() {
            if keep(label) {
                pixels.extend_from_slice(img);
                labels.push(label);
            }
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            pixels,
            labels,
        }
    }

    pub fn push(&mut self, image: &[u8], label: u8) {
        assert_eq!(image.len(), self.pixels_per_image());
        self.pixels.extend_from_slice(image);
        self.labels.push(label);
    }

    pub fn write(&self, images_path: &Path, labels_path: &Path) -> Result<()> {
        fs::write(images_path, encode_images(self))?;
        fs::write(labels_path, encode_labels(&self.labels))?;
        Ok(())
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Idx("truncated header".into()))
}

/// Parses an image file into `(count, rows, cols, pixels)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::Idx(format!("image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| DataError::Idx("dimensions overflow".into()))?;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(DataError::Idx(format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    Ok((count, rows, cols, payload.to_vec()))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::Idx(format!("label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = read_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(DataError::Idx(format!(
            "payload has {} bytes, header implies {count}",
            payload.len()
        )));
    }
    Ok(payload.to_vec())
}

pub fn encode_images(raw: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + raw.pixels.len());
    for v in [IMAGES_MAGIC, raw.len() as u32, raw.rows as u32, raw.cols as u32] {
        out.write_all(&v.to_be_bytes()).expect("vec write");
    }
    out.extend_from_slice(&raw.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads an image file and its label file, checking that the counts agree.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawImages> {
    let (count, rows, cols, pixels) = parse_images(&fs::read(images_path)?)?;
    let labels = parse_labels(&fs::read(labels_path)?)?;
    if labels.len() != count {
        return Err(DataError::Idx(format!("{count} images but {} labels", labels.len())));
    }
    RawImages::new(rows, cols, pixels, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_errors() {
        assert!(parse_images(&[0, 0, 8]).is_err());
        let raw = RawImages::new(2, 2, vec![1, 2, 3, 4], vec![7]).unwrap();
        let mut bytes = encode_images(&raw);
        assert_eq!(parse_images(&bytes).unwrap().3, vec![1, 2, 3, 4]);
        bytes.pop();
        assert!(parse_images(&bytes).is_err());
        assert!(parse_labels(&encode_images(&raw)).is_err());
        assert_eq!(parse_labels(&encode_labels(&[3, 1])).unwrap(), vec![3, 1]);
    }
}
