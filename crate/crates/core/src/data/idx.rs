//! IDX (MNIST-style) big-endian files.
//!
//! Images: magic `0x00000803`, count, rows, cols (all u32 BE), then
//! `count·rows·cols` unsigned bytes. Labels: magic `0x00000801`, count, then
//! `count` bytes.

use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Multi-class image data as stored on disk: raw bytes plus digit labels.
///
/// Pixels stay as bytes to keep 60k×784 images small; [`RawDataset::feature_row`]
/// yields the `[0,1]`-scaled view.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub rows: usize,
    pub cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl RawDataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != rows * cols * labels.len() {
            return Err(Error::Contract(format!(
                "{} pixel bytes do not match {} images of {}x{}",
                pixels.len(),
                labels.len(),
                rows,
                cols
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

    pub fn n_features(&self) -> usize {
        self.rows * self.cols
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self, i: usize) -> &[u8] {
        let n = self.n_features();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Row-major image `i` scaled to `[0,1]` by dividing by 255.
    pub fn feature_row(&self, i: usize) -> Vec<f64> {
        self.pixels(i).iter().map(|&p| f64::from(p) / 255.0).collect()
    }

    pub fn class_count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    /// Keeps only the rows whose label is in `classes`.
    pub fn filter_classes(&self, classes: &[u8]) -> RawDataset {
        let n = self.n_features();
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if classes.contains(&l) {
                pixels.extend_from_slice(&self.pixels[i * n..(i + 1) * n]);
                labels.push(l);
            }
        }
        RawDataset {
            rows: self.rows,
            cols: self.cols,
            pixels,
            labels,
        }
    }
}

fn read_u32(bytes: &[u8], offset: usize, field: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(field, "file truncated inside header"))
}

/// Parses an image file and a label file into a [`RawDataset`].
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<RawDataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    parse_idx(&images, &labels)
}

/// File names of the standard MNIST-style distribution, in the order
/// train images, train labels, test images, test labels.
pub const IDX_FILE_NAMES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Loads the train and test splits from a directory holding [`IDX_FILE_NAMES`].
pub fn load_idx_dir(dir: impl AsRef<Path>) -> Result<(RawDataset, RawDataset)> {
    let dir = dir.as_ref();
    let [tri, trl, tei, tel] = IDX_FILE_NAMES.map(|f| dir.join(f));
    Ok((load_idx(tri, trl)?, load_idx(tei, tel)?))
}

pub(crate) fn parse_idx(images: &[u8], labels: &[u8]) -> Result<RawDataset> {
    let magic = read_u32(images, 0, "images.magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            "images.magic",
            format!("expected 0x{IDX_IMAGES_MAGIC:08x}, found 0x{magic:08x}"),
        ));
    }
    let count = read_u32(images, 4, "images.count")? as usize;
    let rows = read_u32(images, 8, "images.rows")? as usize;
    let cols = read_u32(images, 12, "images.cols")? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format("images.count", "dimension product overflows"))?;
    let body = &images[16..];
    if body.len() < expected {
        return Err(Error::format(
            "images.data",
            format!("truncated: expected {expected} bytes, found {}", body.len()),
        ));
    }

    let magic = read_u32(labels, 0, "labels.magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            "labels.magic",
            format!("expected 0x{IDX_LABELS_MAGIC:08x}, found 0x{magic:08x}"),
        ));
    }
    let label_count = read_u32(labels, 4, "labels.count")? as usize;
    if label_count != count {
        return Err(Error::format(
            "labels.count",
            format!("{label_count} labels for {count} images"),
        ));
    }
    let label_body = &labels[8..];
    if label_body.len() < label_count {
        return Err(Error::format(
            "labels.data",
            format!("truncated: expected {label_count} bytes, found {}", label_body.len()),
        ));
    }
    RawDataset::new(
        rows,
        cols,
        body[..expected].to_vec(),
        label_body[..label_count].to_vec(),
    )
}

/// Writes an IDX image file (used for fixtures and exports).
pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let per = rows * cols;
    if per == 0 || pixels.len() % per != 0 {
        return Err(Error::Contract("pixel buffer is not a whole number of images".into()));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&((pixels.len() / per) as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    fs::write(path, out)?;
    Ok(())
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(count: usize) -> (Vec<u8>, Vec<u8>) {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i");
        let lp = dir.path().join("l");
        let mut pixels = vec![0u8; count * 784];
        pixels[784] = 255;
        pixels[785] = 51;
        write_idx_images(&ip, 28, 28, &pixels).unwrap();
        write_idx_labels(&lp, &(0..count as u8).collect::<Vec<_>>()).unwrap();
        (fs::read(ip).unwrap(), fs::read(lp).unwrap())
    }

    #[test]
    fn parses_fabricated_files() {
        let (i, l) = fixture(3);
        let raw = parse_idx(&i, &l).unwrap();
        assert_eq!(raw.len(), 3);
        assert_eq!(raw.n_features(), 784);
        assert!(raw.feature_row(0).iter().all(|&v| v == 0.0));
        assert_eq!(raw.feature_row(1)[0], 1.0);
        assert_eq!(raw.feature_row(1)[1], 0.2);
        assert_eq!(raw.labels(), &[0, 1, 2]);
    }

    #[test]
    fn bad_magic_names_the_field() {
        let (mut i, l) = fixture(2);
        i[3] = 0x01;
        let err = parse_idx(&i, &l).unwrap_err();
        assert!(err.to_string().contains("images.magic"), "{err}");
        let (i, mut l) = fixture(2);
        l[3] = 0x03;
        assert!(parse_idx(&i, &l).unwrap_err().to_string().contains("labels.magic"));
    }

    #[test]
    fn truncation_and_count_mismatch() {
        let (i, l) = fixture(2);
        let err = parse_idx(&i[..i.len() - 1], &l).unwrap_err();
        assert!(err.to_string().contains("images.data"), "{err}");
        let err = parse_idx(&i[..10], &l).unwrap_err();
        assert!(err.to_string().contains("images.rows"), "{err}");
        let (_, l3) = fixture(3);
        let err = parse_idx(&i, &l3).unwrap_err();
        assert!(err.to_string().contains("labels.count"), "{err}");
    }
}
