//! Layered architectures: stacks of scan + match stages trained bottom-up,
//! closed by a supervised 1×1-output top layer.
//!
//! Training pools every window of every image for a layer, trains that
//! layer's grid, then rewrites each image as the lattice of BMU coordinates
//! before moving up. The top layer sees one window per image, augmented with
//! per-class supervisory channels during training only; a channel mask hides
//! those channels from all later matching, and the surviving components of
//! each top node are read back out to label it with a class and a
//! consistency score.

use std::time::Instant;

use thiserror::Error;

use crate::io::LabeledDataset;
use crate::lattice::{
    inverse_scan, output_side, scan, Lattice, LatticeError, Rounding, WindowGeometry,
};
use crate::som::{GridCoord, SampleSet, SomError, SomGrid, TrainParams, TrainingStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArchError {
    #[error("architecture needs at least one layer")]
    NoLayers,
    #[error("number of classes must be at least 1")]
    NoClasses,
    #[error("sup_scale must be positive and finite")]
    InvalidSupScale,
    #[error("invalid window geometry in layer {layer}")]
    Geometry {
        layer: usize,
        #[source]
        source: LatticeError,
    },
    #[error("layer {layer}: grid side must be at least 1")]
    ZeroGridSide { layer: usize },
    #[error("top layer yields a {u}x{u} lattice, not 1x1; adjust the window chain")]
    TopNotUnit { u: usize },
    #[error("top grid {k}x{k} has fewer nodes than classes ({classes})")]
    TopGridTooSmall { k: usize, classes: usize },
    #[error("{params} per-layer training parameter sets for {layers} layers")]
    ParamsMismatch { params: usize, layers: usize },
    #[error("label {label} is out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(
        "image is {side}x{side} with cell dimension {dim}; expected {expected}x{expected} scalars"
    )]
    ImageShape {
        side: usize,
        dim: usize,
        expected: usize,
    },
    #[error("malformed model: {reason}")]
    MalformedModel { reason: String },
    #[error(transparent)]
    Som(#[from] SomError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// One layer: `p × p` windows at stride `v` feeding a `k × k` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub p: usize,
    pub v: usize,
    pub k: usize,
}

impl LayerSpec {
    pub fn new(p: usize, v: usize, k: usize) -> Self {
        LayerSpec { p, v, k }
    }
}

/// Complete description of an architecture: the layer stack (bottom first),
/// the input lattice side, the class count, the supervisory channel scale,
/// and per-layer training parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    pub layers: Vec<LayerSpec>,
    pub input_side: usize,
    pub num_classes: usize,
    /// Magnitude written into the label's supervisory channel when top-layer
    /// samples are augmented for training.
    pub sup_scale: f64,
    pub train: Vec<TrainParams>,
}

impl ArchitectureSpec {
    /// Build a spec with one shared set of training parameters. Layer `i`
    /// trains with `shared.seed + i` so the stages draw independent sample
    /// streams. `sup_scale` defaults to the side of the grid feeding the top
    /// layer (label channel comparable to one coordinate channel), or 1.0
    /// for single-layer architectures whose top input is unit-scale pixels.
    pub fn new(
        layers: Vec<LayerSpec>,
        input_side: usize,
        num_classes: usize,
        shared: TrainParams,
    ) -> Self {
        let sup_scale = if layers.len() >= 2 {
            layers[layers.len() - 2].k as f64
        } else {
            1.0
        };
        let train = (0..layers.len())
            .map(|i| TrainParams {
                iterations: shared.iterations,
                base_rate: shared.base_rate,
                seed: shared.seed.wrapping_add(i as u64),
            })
            .collect();
        ArchitectureSpec {
            layers,
            input_side,
            num_classes,
            sup_scale,
            train,
        }
    }

    /// Check the whole spec and derive the window geometry chain. The chain
    /// must shrink to a 1×1 lattice at the top, and the top grid must have
    /// at least one node per class.
    pub fn validate(&self) -> Result<Vec<WindowGeometry>, ArchError> {
        if self.layers.is_empty() {
            return Err(ArchError::NoLayers);
        }
        if self.num_classes == 0 {
            return Err(ArchError::NoClasses);
        }
        if !(self.sup_scale > 0.0 && self.sup_scale.is_finite()) {
            return Err(ArchError::InvalidSupScale);
        }
        if self.train.len() != self.layers.len() {
            return Err(ArchError::ParamsMismatch {
                params: self.train.len(),
                layers: self.layers.len(),
            });
        }
        let mut side = self.input_side;
        let mut chain = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.k == 0 {
                return Err(ArchError::ZeroGridSide { layer: i });
            }
            let geom = output_side(side, layer.p, layer.v)
                .map_err(|source| ArchError::Geometry { layer: i, source })?;
            side = geom.u();
            chain.push(geom);
        }
        if side != 1 {
            return Err(ArchError::TopNotUnit { u: side });
        }
        let k_top = self.layers.last().unwrap().k;
        if k_top * k_top < self.num_classes {
            return Err(ArchError::TopGridTooSmall {
                k: k_top,
                classes: self.num_classes,
            });
        }
        Ok(chain)
    }
}

/// Append `num_classes` supervisory channels to a feature vector: all zero
/// except `sup_scale` at the label's index.
pub fn augment_supervised(
    features: &[f64],
    label: usize,
    num_classes: usize,
    sup_scale: f64,
) -> Result<Vec<f64>, ArchError> {
    if label >= num_classes {
        return Err(ArchError::LabelOutOfRange {
            label,
            classes: num_classes,
        });
    }
    let mut out = Vec::with_capacity(features.len() + num_classes);
    out.extend_from_slice(features);
    out.resize(features.len() + num_classes, 0.0);
    out[features.len() + label] = sup_scale;
    Ok(out)
}

/// Apply the match operator to every cell of a window lattice, producing the
/// lattice of BMU coordinates (dimension 2: row, column — raw integers).
pub fn match_lattice(grid: &SomGrid, windows: &Lattice) -> Result<Lattice, SomError> {
    let samples = SampleSet::from_flat(windows.dim(), windows.as_slice().to_vec());
    let coords = grid.match_batch(&samples)?;
    let mut out = Lattice::zeros(windows.side(), 2);
    let side = windows.side();
    for (i, coord) in coords.iter().enumerate() {
        out.cell_mut(i / side, i % side)
            .copy_from_slice(&[coord.row as f64, coord.col as f64]);
    }
    Ok(out)
}

/// Class of each node by the argmax of its supervisory components (ties to
/// the smallest class index), row-major over the grid.
fn class_map_from_grid(grid: &SomGrid, feat_dim: usize, num_classes: usize) -> Vec<usize> {
    let mut map = Vec::with_capacity(grid.side() * grid.side());
    for row in 0..grid.side() {
        for col in 0..grid.side() {
            let sup = &grid.vector(row, col)[feat_dim..feat_dim + num_classes];
            let mut best = (0usize, sup[0]);
            for (c, &x) in sup.iter().enumerate().skip(1) {
                if x > best.1 {
                    best = (c, x);
                }
            }
            map.push(best.0);
        }
    }
    map
}

/// Consistency of each node: the share of its forward matches carrying the
/// node's most frequent label. Unmatched nodes score 0.
fn consistency_from_matches(
    side: usize,
    num_classes: usize,
    coords: &[GridCoord],
    labels: &[u8],
) -> Vec<f64> {
    let mut counts = vec![0u32; side * side * num_classes];
    for (coord, &label) in coords.iter().zip(labels) {
        counts[(coord.row * side + coord.col) * num_classes + label as usize] += 1;
    }
    counts
        .chunks_exact(num_classes)
        .map(|node| {
            let total: u32 = node.iter().sum();
            if total == 0 {
                0.0
            } else {
                *node.iter().max().unwrap() as f64 / total as f64
            }
        })
        .collect()
}

/// A trained layered model: the validated spec, the geometry chain, one grid
/// per layer (the top one channel-masked), and the top-node labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct LsomModel {
    spec: ArchitectureSpec,
    geometry: Vec<WindowGeometry>,
    grids: Vec<SomGrid>,
    class_map: Vec<usize>,
    consistency: Vec<f64>,
    layer_stats: Vec<TrainingStats>,
}

impl LsomModel {
    /// Reassemble a model from its stored pieces (archive loading, tests),
    /// revalidating the spec and every cross-field shape constraint.
    pub fn from_parts(
        spec: ArchitectureSpec,
        grids: Vec<SomGrid>,
        class_map: Vec<usize>,
        consistency: Vec<f64>,
        layer_stats: Vec<TrainingStats>,
    ) -> Result<Self, ArchError> {
        let geometry = spec.validate()?;
        let n = spec.layers.len();
        let malformed = |reason: &str| ArchError::MalformedModel {
            reason: reason.to_string(),
        };
        if grids.len() != n || layer_stats.len() != n {
            return Err(malformed("grid or stats count does not match layer count"));
        }
        let mut cell_dim = 1usize;
        for (i, (grid, geom)) in grids.iter().zip(&geometry).enumerate() {
            let feat_dim = geom.p() * geom.p() * cell_dim;
            let expect_dim = if i + 1 == n {
                feat_dim + spec.num_classes
            } else {
                feat_dim
            };
            if grid.side() != spec.layers[i].k {
                return Err(malformed("grid side does not match layer spec"));
            }
            if grid.dim() != expect_dim {
                return Err(malformed("grid dimension does not match geometry chain"));
            }
            if i + 1 == n {
                let want: Vec<usize> = (0..feat_dim).collect();
                if grid.channel_mask() != Some(&want[..]) {
                    return Err(malformed("top grid must mask exactly the feature channels"));
                }
            } else if grid.channel_mask().is_some() {
                return Err(malformed("only the top grid may carry a channel mask"));
            }
            cell_dim = 2;
        }
        let k_top = spec.layers[n - 1].k;
        if class_map.len() != k_top * k_top || consistency.len() != k_top * k_top {
            return Err(malformed("labeling maps do not cover the top grid"));
        }
        if class_map.iter().any(|&c| c >= spec.num_classes) {
            return Err(malformed("class map entry out of range"));
        }
        if consistency.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(malformed("consistency outside [0, 1]"));
        }
        Ok(LsomModel {
            spec,
            geometry,
            grids,
            class_map,
            consistency,
            layer_stats,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn geometry(&self) -> &[WindowGeometry] {
        &self.geometry
    }

    pub fn grids(&self) -> &[SomGrid] {
        &self.grids
    }

    pub fn layer_stats(&self) -> &[TrainingStats] {
        &self.layer_stats
    }

    pub fn top_side(&self) -> usize {
        self.spec.layers.last().unwrap().k
    }

    /// Feature dimension of the top layer (supervisory channels excluded).
    pub fn top_feature_dim(&self) -> usize {
        let n = self.spec.layers.len();
        let cell_dim = if n >= 2 { 2 } else { 1 };
        let p = self.geometry[n - 1].p();
        p * p * cell_dim
    }

    /// Class assignments of the top nodes, row-major.
    pub fn class_map(&self) -> &[usize] {
        &self.class_map
    }

    /// Consistency scores of the top nodes, row-major.
    pub fn consistency(&self) -> &[f64] {
        &self.consistency
    }

    pub fn class_at(&self, coord: GridCoord) -> Option<usize> {
        let side = self.top_side();
        (coord.row < side && coord.col < side).then(|| self.class_map[coord.row * side + coord.col])
    }

    pub fn consistency_at(&self, coord: GridCoord) -> Option<f64> {
        let side = self.top_side();
        (coord.row < side && coord.col < side)
            .then(|| self.consistency[coord.row * side + coord.col])
    }

    fn check_image(&self, image: &Lattice) -> Result<(), ArchError> {
        if image.side() != self.spec.input_side || image.dim() != 1 {
            return Err(ArchError::ImageShape {
                side: image.side(),
                dim: image.dim(),
                expected: self.spec.input_side,
            });
        }
        Ok(())
    }

    /// Run one image up the stack to its top-level BMU.
    pub fn forward(&self, image: &Lattice) -> Result<GridCoord, ArchError> {
        self.check_image(image)?;
        let n = self.grids.len();
        let mut lat = image.clone();
        for i in 0..n - 1 {
            let windows = scan(&lat, &self.geometry[i])?;
            lat = match_lattice(&self.grids[i], &windows)?;
        }
        let top_windows = scan(&lat, &self.geometry[n - 1])?;
        Ok(self.grids[n - 1].find_bmu(top_windows.cell(0, 0))?)
    }

    /// Forward an entire dataset, batching the expensive top-grid matching
    /// across images. Identical results to per-image [`LsomModel::forward`].
    pub fn forward_batch(&self, dataset: &LabeledDataset) -> Result<Vec<GridCoord>, ArchError> {
        let n = self.grids.len();
        let top_geom = &self.geometry[n - 1];
        let feat_dim = self.top_feature_dim();
        let mut feats = SampleSet::with_capacity(feat_dim, dataset.len());
        for image in &dataset.images {
            self.check_image(image)?;
            let mut lat = image.clone();
            for i in 0..n - 1 {
                let windows = scan(&lat, &self.geometry[i])?;
                lat = match_lattice(&self.grids[i], &windows)?;
            }
            feats.push(scan(&lat, top_geom)?.cell(0, 0));
        }
        Ok(self.grids[n - 1].match_batch(&feats)?)
    }

    /// Class of the image's top-level BMU.
    pub fn classify(&self, image: &Lattice) -> Result<usize, ArchError> {
        let coord = self.forward(image)?;
        Ok(self
            .class_at(coord)
            .expect("forward returns in-grid coordinates"))
    }

    /// Generate the synthetic input image a top node represents: read the
    /// node's feature vector and run the inverse operators back down the
    /// stack. Coordinate lattices round half-to-even and clamp onto the grid
    /// below; the final image clamps into [0, 1].
    pub fn generate(&self, coord: GridCoord) -> Result<Lattice, ArchError> {
        let n = self.grids.len();
        let full = self.grids[n - 1].inverse_match(coord)?;
        let feat_dim = self.top_feature_dim();
        let mut windows = Lattice::from_cells(1, feat_dim, full[..feat_dim].to_vec());
        for i in (0..n).rev() {
            let rounding = if i == 0 {
                Rounding::ClampUnit
            } else {
                Rounding::Round {
                    max: (self.spec.layers[i - 1].k - 1) as f64,
                }
            };
            let lat = inverse_scan(&windows, &self.geometry[i], rounding)?;
            if i == 0 {
                return Ok(lat);
            }
            windows = inverse_match_lattice(&self.grids[i - 1], &lat)?;
        }
        unreachable!("validated specs have at least one layer")
    }
}

/// Expand a coordinate lattice back into the window vectors stored at those
/// grid nodes.
fn inverse_match_lattice(grid: &SomGrid, coords: &Lattice) -> Result<Lattice, SomError> {
    let mut out = Lattice::zeros(coords.side(), grid.dim());
    for row in 0..coords.side() {
        for col in 0..coords.side() {
            let cell = coords.cell(row, col);
            let vec = grid.inverse_match(GridCoord::new(cell[0] as usize, cell[1] as usize))?;
            out.cell_mut(row, col).copy_from_slice(&vec);
        }
    }
    Ok(out)
}

/// Train a full architecture bottom-up on a labeled dataset.
///
/// Every layer pools the windows of all images (in image order, window
/// row-major) and trains its grid on that pool; the top layer's pool is
/// augmented with supervisory channels first. After training, the top grid
/// is masked down to its feature channels and every node is labeled by class
/// and consistency from the training images' forward matches.
pub fn train_model(
    dataset: &LabeledDataset,
    spec: &ArchitectureSpec,
) -> Result<LsomModel, ArchError> {
    let geometry = spec.validate()?;
    if dataset.is_empty() {
        return Err(ArchError::EmptyDataset);
    }
    for image in &dataset.images {
        if image.side() != spec.input_side {
            return Err(ArchError::ImageShape {
                side: image.side(),
                dim: image.dim(),
                expected: spec.input_side,
            });
        }
    }
    if let Some(&label) = dataset
        .labels
        .iter()
        .find(|&&l| l as usize >= spec.num_classes)
    {
        return Err(ArchError::LabelOutOfRange {
            label: label as usize,
            classes: spec.num_classes,
        });
    }

    let n = spec.layers.len();
    let mut current: Vec<Lattice> = dataset.images.clone();
    let mut grids = Vec::with_capacity(n);
    let mut layer_stats = Vec::with_capacity(n);
    let mut top_coords = Vec::new();

    for (i, geom) in geometry.iter().enumerate() {
        let k = spec.layers[i].k;
        let params = &spec.train[i];
        let win_dim = geom.p() * geom.p() * current[0].dim();

        if i + 1 == n {
            // Top layer: one window per image; train on augmented vectors,
            // then mask the supervisory channels away for good.
            let mut feats = SampleSet::with_capacity(win_dim, current.len());
            for lat in &current {
                feats.push(scan(lat, geom)?.cell(0, 0));
            }
            let mut pool = SampleSet::with_capacity(win_dim + spec.num_classes, feats.len());
            for (feat, &label) in feats.iter().zip(&dataset.labels) {
                pool.push(&augment_supervised(
                    feat,
                    label as usize,
                    spec.num_classes,
                    spec.sup_scale,
                )?);
            }
            let mut grid = SomGrid::new(k, pool.dim(), params.seed);
            layer_stats.push(grid.train(&pool, params)?);
            grid.set_channel_mask((0..win_dim).collect())?;
            top_coords = grid.match_batch(&feats)?;
            grids.push(grid);
        } else {
            let u = geom.u();
            let mut pool = SampleSet::with_capacity(win_dim, current.len() * u * u);
            for lat in &current {
                let windows = scan(lat, geom)?;
                for cell in windows.cells() {
                    pool.push(cell);
                }
            }
            let mut grid = SomGrid::new(k, win_dim, params.seed);
            layer_stats.push(grid.train(&pool, params)?);
            for lat in current.iter_mut() {
                let windows = scan(lat, geom)?;
                *lat = match_lattice(&grid, &windows)?;
            }
            grids.push(grid);
        }
    }

    let k_top = spec.layers[n - 1].k;
    let feat_dim = grids[n - 1].channel_mask().unwrap().len();
    let class_map = class_map_from_grid(&grids[n - 1], feat_dim, spec.num_classes);
    let consistency =
        consistency_from_matches(k_top, spec.num_classes, &top_coords, &dataset.labels);

    Ok(LsomModel {
        spec: spec.clone(),
        geometry,
        grids,
        class_map,
        consistency,
        layer_stats,
    })
}

/// Recompute the class and consistency maps of a trained model against a
/// dataset. On the model's own training set this reproduces the maps stored
/// by [`train_model`] exactly.
pub fn label_nodes(
    model: &LsomModel,
    dataset: &LabeledDataset,
) -> Result<(Vec<usize>, Vec<f64>), ArchError> {
    if dataset.is_empty() {
        return Err(ArchError::EmptyDataset);
    }
    let coords = model.forward_batch(dataset)?;
    let class_map = class_map_from_grid(
        &model.grids[model.grids.len() - 1],
        model.top_feature_dim(),
        model.spec.num_classes,
    );
    let consistency = consistency_from_matches(
        model.top_side(),
        model.spec.num_classes,
        &coords,
        &dataset.labels,
    );
    Ok((class_map, consistency))
}

/// Accuracy report for a model over a training and a validation set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub train_accuracy: f64,
    pub validate_accuracy: f64,
    pub train_count: usize,
    pub validate_count: usize,
    /// (initial, final) quantization error per layer, from training.
    pub layer_qe: Vec<(f64, f64)>,
    pub sup_scale: f64,
    /// Wall-clock seconds spent classifying; excluded from any reproducible
    /// output comparison.
    pub elapsed_secs: f64,
}

fn accuracy(model: &LsomModel, dataset: &LabeledDataset) -> Result<f64, ArchError> {
    let coords = model.forward_batch(dataset)?;
    let side = model.top_side();
    let hits = coords
        .iter()
        .zip(&dataset.labels)
        .filter(|(coord, &label)| model.class_map[coord.row * side + coord.col] == label as usize)
        .count();
    Ok(hits as f64 / dataset.len() as f64)
}

/// Classification accuracy on both datasets.
pub fn evaluate(
    model: &LsomModel,
    train: &LabeledDataset,
    validate: &LabeledDataset,
) -> Result<EvalReport, ArchError> {
    if train.is_empty() || validate.is_empty() {
        return Err(ArchError::EmptyDataset);
    }
    let started = Instant::now();
    let train_accuracy = accuracy(model, train)?;
    let validate_accuracy = accuracy(model, validate)?;
    Ok(EvalReport {
        train_accuracy,
        validate_accuracy,
        train_count: train.len(),
        validate_count: validate.len(),
        layer_qe: model
            .layer_stats
            .iter()
            .map(|s| (s.initial_qe, s.final_qe))
            .collect(),
        sup_scale: model.spec.sup_scale,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}
