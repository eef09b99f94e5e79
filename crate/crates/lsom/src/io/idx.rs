//! The IDX byte format used by the MNIST distribution files: a big-endian
//! magic, big-endian dimension sizes, then raw unsigned bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use super::{DataError, LabeledDataset};
use crate::lattice::Lattice;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const NUM_CLASSES: usize = 10;

const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

fn read_u32_be(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn check_len(bytes: &[u8], expected: usize) -> Result<(), DataError> {
    if bytes.len() != expected {
        return Err(DataError::LengthMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

/// Parse an IDX image file into raw 28×28 pixel buffers (no scaling).
/// The byte stream must be exactly the declared size.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<u8>>, DataError> {
    if bytes.len() < 16 {
        return Err(DataError::LengthMismatch {
            expected: 16,
            actual: bytes.len(),
        });
    }
    let magic = read_u32_be(bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(bytes, 4) as usize;
    let rows = read_u32_be(bytes, 8);
    let cols = read_u32_be(bytes, 12);
    if rows as usize != IMAGE_SIDE || cols as usize != IMAGE_SIDE {
        return Err(DataError::WrongImageDims { rows, cols });
    }
    check_len(bytes, 16 + count * PIXELS)?;
    Ok(bytes[16..]
        .chunks_exact(PIXELS)
        .map(|px| px.to_vec())
        .collect())
}

/// Parse an IDX label file. Labels must be digit classes (0–9).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    if bytes.len() < 8 {
        return Err(DataError::LengthMismatch {
            expected: 8,
            actual: bytes.len(),
        });
    }
    let magic = read_u32_be(bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(DataError::BadMagic {
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(bytes, 4) as usize;
    check_len(bytes, 8 + count)?;
    let labels = bytes[8..].to_vec();
    if let Some(&label) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(DataError::BadLabel { label });
    }
    Ok(labels)
}

/// Serialize pixel buffers back to IDX bytes; inverse of [`parse_idx_images`].
pub fn encode_idx_images(images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * PIXELS);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    for image in images {
        assert_eq!(image.len(), PIXELS, "image buffer must hold 28x28 pixels");
        out.extend_from_slice(image);
    }
    out
}

/// Serialize labels back to IDX bytes; inverse of [`parse_idx_labels`].
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Build a labeled dataset from parallel IDX image and label bytes, scaling
/// pixels to `[0, 1]` (byte / 255).
///
/// With `limit = Some(n)`, a uniform random subset of `n` items is drawn
/// without replacement (seeded, reproducible) and kept in ascending original
/// order; `None` keeps everything and ignores the seed.
pub fn load_dataset(
    image_bytes: &[u8],
    label_bytes: &[u8],
    limit: Option<usize>,
    seed: u64,
    name: &str,
) -> Result<LabeledDataset, DataError> {
    let images = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if images.len() != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    let picked: Vec<usize> = match limit {
        None => (0..images.len()).collect(),
        Some(n) => {
            if n > images.len() {
                return Err(DataError::SubsetTooLarge {
                    requested: n,
                    available: images.len(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, images.len(), n).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    let mut out_images = Vec::with_capacity(picked.len());
    let mut out_labels = Vec::with_capacity(picked.len());
    for &i in &picked {
        let cells: Vec<f64> = images[i].iter().map(|&b| b as f64 / 255.0).collect();
        out_images.push(Lattice::from_cells(IMAGE_SIDE, 1, cells));
        out_labels.push(labels[i]);
    }
    LabeledDataset::new(out_images, out_labels, name)
}

/// [`load_dataset`] reading the IDX files from disk.
pub fn load_dataset_from_files(
    images_path: &Path,
    labels_path: &Path,
    limit: Option<usize>,
    seed: u64,
    name: &str,
) -> Result<LabeledDataset, DataError> {
    let read = |path: &Path| {
        std::fs::read(path).map_err(|source| DataError::File {
            path: path.display().to_string(),
            source,
        })
    };
    load_dataset(&read(images_path)?, &read(labels_path)?, limit, seed, name)
}
