//! IDX container format (MNIST): big-endian u32 header fields followed by raw u8 data.
//!
//! Images: magic `0x00000803`, count, rows, cols, then `count·rows·cols` pixel bytes.
//! Labels: magic `0x00000801`, count, then `count` label bytes.

use std::path::Path;

use ndarray::Array2;

use crate::data::Dataset;
use crate::error::{IdxError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count · rows · cols` bytes, image-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, IdxError> {
        let mut r = Reader { bytes, pos: 0 };
        r.magic(IMAGE_MAGIC)?;
        let count = r.u32()? as usize;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let pixels = r.take(count * rows * cols)?.to_vec();
        Ok(Self { rows, cols, pixels })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for v in [IMAGE_MAGIC, self.count() as u32, self.rows as u32, self.cols as u32] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxLabels {
    pub labels: Vec<u8>,
}

impl IdxLabels {
    pub fn parse(bytes: &[u8]) -> Result<Self, IdxError> {
        let mut r = Reader { bytes, pos: 0 };
        r.magic(LABEL_MAGIC)?;
        let count = r.u32()? as usize;
        Ok(Self {
            labels: r.take(count)?.to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.labels.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IdxError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(IdxError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IdxError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<(), IdxError> {
        let offset = self.pos;
        let found = self.u32()?;
        if found != expected {
            return Err(IdxError::WrongMagic {
                offset,
                expected,
                found,
            });
        }
        Ok(())
    }
}

/// Joins an image file and a label file into a dataset with pixels scaled to `[0, 1]`.
/// The class count is one more than the largest label.
pub fn dataset_from_idx(images: &IdxImages, labels: &IdxLabels) -> Result<Dataset> {
    let n = images.count();
    if n != labels.labels.len() {
        return Err(IdxError::CountMismatch {
            images: n,
            labels: labels.labels.len(),
        }
        .into());
    }
    let dim = images.rows * images.cols;
    let features = Array2::from_shape_fn((n, dim), |(i, j)| images.pixels[i * dim + j] as f64 / 255.0);
    let labels: Vec<usize> = labels.labels.iter().map(|&l| l as usize).collect();
    let class_count = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(features, labels, class_count)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = IdxImages::parse(&std::fs::read(images_path)?)?;
    let labels = IdxLabels::parse(&std::fs::read(labels_path)?)?;
    dataset_from_idx(&images, &labels)
}

/// Inverse of the pixel scaling in [`dataset_from_idx`].
pub fn images_from_dataset(ds: &Dataset, rows: usize, cols: usize) -> IdxImages {
    IdxImages {
        rows,
        cols,
        pixels: ds
            .features
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect(),
    }
}

pub fn labels_from_dataset(ds: &Dataset) -> IdxLabels {
    IdxLabels {
        labels: ds.labels.iter().map(|&l| l as u8).collect(),
    }
}
