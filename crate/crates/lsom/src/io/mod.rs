//! Data in, artifacts out: MNIST IDX ingestion, model archives, and image
//! export in the binary PNM formats.

mod archive;
mod idx;
mod pnm;

pub use archive::{load_model, save_model, ARCHIVE_VERSION};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_dataset, load_dataset_from_files, parse_idx_images,
    parse_idx_labels, IMAGE_SIDE, NUM_CLASSES,
};
pub use pnm::{export_grid_montage, export_pgm, MontageMode};

use thiserror::Error;

use crate::arch::{ArchError, LsomModel};
use crate::lattice::Lattice;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("byte stream is {actual} bytes, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("images are {rows}x{cols}, expected {side}x{side}", side = IMAGE_SIDE)]
    WrongImageDims { rows: u32, cols: u32 },
    #[error("label {label} is not a digit class")]
    BadLabel { label: u8 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("requested {requested} of only {available} available items")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("dataset images must be {side}x{side} scalar lattices with pixels in [0, 1]", side = IMAGE_SIDE)]
    BadImage,
    #[error("unknown archive version {version}")]
    UnknownVersion { version: u32 },
    #[error("corrupt archive: {reason}")]
    CorruptArchive { reason: &'static str },
    #[error("grid dimension {dim} does not factor into {p}x{p} cells of dimension {d}")]
    MontageShape { dim: usize, p: usize, d: usize },
    #[error("montage mode needs cell dimension {expected}, got {actual}")]
    MontageCellDim { expected: usize, actual: usize },
    #[error("scale_max must be positive and finite")]
    BadScale,
    #[error("image for export must be scalar, got cell dimension {dim}")]
    NotScalar { dim: usize },
    #[error("cannot access {path}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ArchError),
}

/// A labeled image collection: 28×28 scalar lattices with pixels in `[0, 1]`
/// and one digit label per image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<Lattice>,
    pub labels: Vec<u8>,
    pub name: String,
}

impl LabeledDataset {
    pub fn new(images: Vec<Lattice>, labels: Vec<u8>, name: &str) -> Result<Self, DataError> {
        if images.len() != labels.len() {
            return Err(DataError::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        for image in &images {
            let ok = image.side() == IMAGE_SIDE
                && image.dim() == 1
                && image.as_slice().iter().all(|&x| (0.0..=1.0).contains(&x));
            if !ok {
                return Err(DataError::BadImage);
            }
        }
        if let Some(&label) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(DataError::BadLabel { label });
        }
        Ok(LabeledDataset {
            images,
            labels,
            name: name.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Render a model's top-node labeling as CSV: one row per node, row-major,
/// under the header `row,col,class,consistency`.
pub fn export_class_map(model: &LsomModel) -> String {
    let side = model.top_side();
    let mut out = String::from("row,col,class,consistency\n");
    for row in 0..side {
        for col in 0..side {
            let i = row * side + col;
            out.push_str(&format!(
                "{},{},{},{}\n",
                row,
                col,
                model.class_map()[i],
                model.consistency()[i]
            ));
        }
    }
    out
}
