//! Layered self-organizing maps.
//!
//! A classic Kohonen grid is wrapped by two lattice operators — `scan`, which
//! slides a window over a square lattice and flattens each view into a vector,
//! and `match`, which replaces each window vector by the grid coordinates of
//! its best-matching unit. Stacking the pair builds a pyramid whose top layer
//! is a single supervised grid; running the approximate inverses back down
//! turns any top-level node into a synthetic input image.
//!
//! Module map:
//! - [`som`]: single-grid training, schedules, BMU search, match/inverse.
//! - [`lattice`]: square lattices, window geometry, scan/inverse-scan.
//! - [`arch`]: layered architectures, supervised top layer, classify/generate.
//! - [`io`]: MNIST IDX ingestion, model archives, PGM/PPM export.

pub mod arch;
pub mod io;
pub mod lattice;
pub mod som;

pub use arch::{
    augment_supervised, evaluate, label_nodes, match_lattice, train_model, ArchError,
    ArchitectureSpec, EvalReport, LayerSpec, LsomModel,
};
pub use io::{load_dataset, load_model, save_model, DataError, LabeledDataset};
pub use lattice::{
    inverse_scan, output_side, scan, Lattice, LatticeError, Rounding, WindowGeometry,
};
pub use som::{
    learning_rate, neighborhood_weight, radius, GridCoord, SampleSet, SomError, SomGrid,
    TrainParams, TrainingStats,
};
