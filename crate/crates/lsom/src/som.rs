//! Single-grid self-organizing maps.
//!
//! A grid is a square arrangement of weight vectors trained by competitive
//! learning: each step finds the best-matching unit (BMU) for one sample and
//! pulls every node inside a shrinking neighborhood toward that sample. The
//! grid doubles as the codebook for the `match` operator, which maps an input
//! to the 2-d coordinates of its BMU.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default multiplier of the exponential learning-rate schedule.
pub const DEFAULT_BASE_RATE: f64 = 0.9;

/// Fresh grid components are drawn uniformly from `[0, INIT_SPAN)`.
pub const INIT_SPAN: f64 = 0.01;

/// [`TrainingStats`] estimates quantization error on a strided subsample of
/// at most this many vectors, so training a grid on a huge window pool does
/// not spend longer measuring than learning.
const QE_STATS_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SomError {
    #[error("input dimension {input} does not match grid dimension {expected}")]
    DimensionMismatch { expected: usize, input: usize },
    #[error("coordinate ({row}, {col}) lies outside a {side}x{side} grid")]
    CoordOutOfRange { row: usize, col: usize, side: usize },
    #[error("sample set is empty")]
    EmptySamples,
    #[error("radius schedule is undefined for a {side}x{side} grid (side must be >= 2)")]
    DegenerateSide { side: usize },
    #[error("channel mask must be a nonempty strictly increasing sequence of indices below {dim}")]
    InvalidMask { dim: usize },
}

/// Position of a node on a grid (or of a cell on a lattice): row then column.
/// The derived ordering is lexicographic (row, then column) — the same order
/// used to break best-match ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridCoord {
    pub row: usize,
    pub col: usize,
}

impl GridCoord {
    pub fn new(row: usize, col: usize) -> Self {
        GridCoord { row, col }
    }
}

/// Knobs for one training run. `iterations` is the `t_m` that both schedules
/// decay against; `seed` drives sample selection (and nothing else).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub iterations: usize,
    pub base_rate: f64,
    pub seed: u64,
}

impl TrainParams {
    pub fn new(iterations: usize, seed: u64) -> Self {
        TrainParams {
            iterations,
            base_rate: DEFAULT_BASE_RATE,
            seed,
        }
    }
}

/// Diagnostics from one call to [`SomGrid::train`]. The quantization errors
/// are measured on a deterministic strided subsample (at most `QE_STATS_CAP`
/// vectors); `qe_samples` records how many were used.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStats {
    pub initial_qe: f64,
    pub final_qe: f64,
    pub qe_samples: usize,
}

/// A flat, uniformly-dimensioned bag of sample vectors.
///
/// Window pools can run to hundreds of thousands of vectors, so samples are
/// stored in one contiguous buffer rather than as separate allocations.
#[derive(Debug, Clone)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "sample dimension must be positive");
        SampleSet {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, samples: usize) -> Self {
        assert!(dim >= 1, "sample dimension must be positive");
        SampleSet {
            dim,
            data: Vec::with_capacity(dim * samples),
        }
    }

    /// Wrap an existing flat buffer of concatenated `dim`-length samples.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim >= 1, "sample dimension must be positive");
        assert_eq!(
            data.len() % dim,
            0,
            "buffer length must be a multiple of dim"
        );
        SampleSet { dim, data }
    }

    pub fn push(&mut self, sample: &[f64]) {
        assert_eq!(sample.len(), self.dim, "sample dimension mismatch");
        self.data.extend_from_slice(sample);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Learning rate at step `t` of `t_m`: `base · exp(−t / t_m)`.
///
/// Starts at `base` and decays smoothly to `base / e` at the final step.
pub fn learning_rate(base: f64, t: usize, t_m: usize) -> f64 {
    debug_assert!(t_m >= 1, "schedule needs at least one iteration");
    base * (-(t as f64) / (t_m as f64)).exp()
}

/// Neighborhood radius at step `t` of `t_m` for a grid of side `s`:
/// `R(t) = 0.5·s · exp(−t · ln(0.5·s) / t_m)`.
///
/// Decays from half the grid side to exactly 1 at the final step (the value
/// is clamped to `[1, 0.5·s]`, which only absorbs the final ulp of `exp`).
/// Undefined for grids smaller than 2×2.
pub fn radius(t: usize, t_m: usize, side: usize) -> Result<f64, SomError> {
    if side < 2 {
        return Err(SomError::DegenerateSide { side });
    }
    debug_assert!(t_m >= 1, "schedule needs at least one iteration");
    let half = 0.5 * side as f64;
    let r = half * (-(t as f64) * half.ln() / (t_m as f64)).exp();
    Ok(r.clamp(1.0, half))
}

/// Gaussian neighborhood truncated at the radius: for grid distance
/// `g = √((Δrow)² + (Δcol)²)` the weight is `exp(−g² / r_t²)` when `g < r_t`
/// and exactly 0 otherwise. The BMU itself always gets weight 1.
pub fn neighborhood_weight(bmu: GridCoord, node: GridCoord, r_t: f64) -> f64 {
    let dr = bmu.row as f64 - node.row as f64;
    let dc = bmu.col as f64 - node.col as f64;
    let g2 = dr * dr + dc * dc;
    if g2.sqrt() < r_t {
        (-g2 / (r_t * r_t)).exp()
    } else {
        0.0
    }
}

/// Squared Euclidean distance, accumulated in four independent lanes so the
/// loop vectorizes; the lane layout is fixed, keeping results reproducible.
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let pa = &a[i * 4..i * 4 + 4];
        let pb = &b[i * 4..i * 4 + 4];
        for lane in 0..4 {
            let d = pa[lane] - pb[lane];
            acc[lane] += d * d;
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// How an input of a given length is compared against node vectors, given the
/// grid's channel mask. Resolved once per call, not once per node.
#[derive(Clone, Copy)]
enum DistKind<'a> {
    /// Compare all components.
    Full,
    /// Compare the first `n` components of both sides (mask is `0..n`).
    Prefix(usize),
    /// Full-length input; compare only the masked positions of both sides.
    MaskedFull(&'a [usize]),
    /// Mask-length input; `input[j]` compares against `vec[mask[j]]`.
    MaskedGather(&'a [usize]),
}

fn mask_is_prefix(mask: &[usize]) -> bool {
    mask.iter().enumerate().all(|(i, &m)| i == m)
}

/// A square self-organizing map: `side × side` nodes, each holding a `dim`
/// weight vector, stored row-major in one contiguous buffer.
///
/// An optional *channel mask* restricts distance computations to a subset of
/// components. The layered architecture uses it to hide supervisory label
/// channels at inference time while `inverse_match` still returns full
/// vectors. Grids are read-only once trained, so `&SomGrid` can be shared
/// freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SomGrid {
    side: usize,
    dim: usize,
    vectors: Vec<f64>,
    channel_mask: Option<Vec<usize>>,
}

impl SomGrid {
    /// Fresh grid with every component drawn uniformly from `[0, INIT_SPAN)`,
    /// in row-major node order; the same seed always yields the same grid.
    pub fn new(side: usize, dim: usize, seed: u64) -> Self {
        assert!(
            side >= 1 && dim >= 1,
            "grid side and dimension must be positive"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = (0..side * side * dim)
            .map(|_| rng.random::<f64>() * INIT_SPAN)
            .collect();
        SomGrid {
            side,
            dim,
            vectors,
            channel_mask: None,
        }
    }

    /// Rebuild a grid from raw row-major components (archive loading, tests).
    pub fn from_vectors(side: usize, dim: usize, vectors: Vec<f64>) -> Self {
        assert!(
            side >= 1 && dim >= 1,
            "grid side and dimension must be positive"
        );
        assert_eq!(vectors.len(), side * side * dim, "component count mismatch");
        SomGrid {
            side,
            dim,
            vectors,
            channel_mask: None,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channel_mask(&self) -> Option<&[usize]> {
        self.channel_mask.as_deref()
    }

    /// Restrict all subsequent distance computations to `mask` (strictly
    /// increasing component indices). Updates and `inverse_match` still see
    /// every component.
    pub fn set_channel_mask(&mut self, mask: Vec<usize>) -> Result<(), SomError> {
        let valid = !mask.is_empty()
            && mask.windows(2).all(|w| w[0] < w[1])
            && *mask.last().unwrap() < self.dim;
        if !valid {
            return Err(SomError::InvalidMask { dim: self.dim });
        }
        self.channel_mask = Some(mask);
        Ok(())
    }

    pub fn clear_channel_mask(&mut self) {
        self.channel_mask = None;
    }

    /// Weight vector of the node at (`row`, `col`). Panics if out of range.
    pub fn vector(&self, row: usize, col: usize) -> &[f64] {
        assert!(
            row < self.side && col < self.side,
            "node index out of range"
        );
        let i = (row * self.side + col) * self.dim;
        &self.vectors[i..i + self.dim]
    }

    /// All components, row-major by node.
    pub fn components(&self) -> &[f64] {
        &self.vectors
    }

    /// Copy of this grid keeping only the first `dim` components per node
    /// (used to strip supervisory channels for export). The mask is dropped.
    pub fn truncated(&self, dim: usize) -> SomGrid {
        assert!(
            dim >= 1 && dim <= self.dim,
            "truncation dimension out of range"
        );
        let mut vectors = Vec::with_capacity(self.side * self.side * dim);
        for node in self.vectors.chunks_exact(self.dim) {
            vectors.extend_from_slice(&node[..dim]);
        }
        SomGrid {
            side: self.side,
            dim,
            vectors,
            channel_mask: None,
        }
    }

    fn node_vector(&self, node: usize) -> &[f64] {
        &self.vectors[node * self.dim..(node + 1) * self.dim]
    }

    fn dist_kind(&self, input_len: usize) -> Result<DistKind<'_>, SomError> {
        match &self.channel_mask {
            None if input_len == self.dim => Ok(DistKind::Full),
            None => Err(SomError::DimensionMismatch {
                expected: self.dim,
                input: input_len,
            }),
            Some(mask) if input_len == mask.len() => {
                if mask_is_prefix(mask) {
                    Ok(DistKind::Prefix(mask.len()))
                } else {
                    Ok(DistKind::MaskedGather(mask))
                }
            }
            Some(mask) if input_len == self.dim => {
                if mask_is_prefix(mask) {
                    Ok(DistKind::Prefix(mask.len()))
                } else {
                    Ok(DistKind::MaskedFull(mask))
                }
            }
            Some(mask) => Err(SomError::DimensionMismatch {
                expected: mask.len(),
                input: input_len,
            }),
        }
    }

    fn node_dist2(&self, node: usize, input: &[f64], kind: DistKind<'_>) -> f64 {
        let vec = self.node_vector(node);
        match kind {
            DistKind::Full => sq_dist(vec, input),
            DistKind::Prefix(n) => sq_dist(&vec[..n], &input[..n]),
            DistKind::MaskedFull(mask) => mask
                .iter()
                .map(|&i| {
                    let d = input[i] - vec[i];
                    d * d
                })
                .sum(),
            DistKind::MaskedGather(mask) => mask
                .iter()
                .enumerate()
                .map(|(j, &i)| {
                    let d = input[j] - vec[i];
                    d * d
                })
                .sum(),
        }
    }

    /// Best-matching unit: the node whose vector minimizes squared Euclidean
    /// distance to `input`, honoring the channel mask. Ties break toward the
    /// lexicographically smallest (row, col).
    ///
    /// With a mask of length `m` set, `input` may carry either all `dim`
    /// components or just the `m` masked ones.
    pub fn find_bmu(&self, input: &[f64]) -> Result<GridCoord, SomError> {
        let kind = self.dist_kind(input.len())?;
        let mut best = (f64::INFINITY, 0usize);
        for node in 0..self.side * self.side {
            let d = self.node_dist2(node, input, kind);
            if d < best.0 {
                best = (d, node);
            }
        }
        Ok(GridCoord::new(best.1 / self.side, best.1 % self.side))
    }

    /// BMUs for a whole sample set at once. Bit-identical to mapping
    /// [`SomGrid::find_bmu`] over the set — same distances, same tie-breaks —
    /// but walks the grid in blocks small enough to stay cache-resident
    /// across samples, which is several times faster on large grids.
    pub fn match_batch(&self, samples: &SampleSet) -> Result<Vec<GridCoord>, SomError> {
        let dists = self.batch_best(samples)?;
        Ok(dists
            .into_iter()
            .map(|(_, node)| GridCoord::new(node / self.side, node % self.side))
            .collect())
    }

    fn batch_best(&self, samples: &SampleSet) -> Result<Vec<(f64, usize)>, SomError> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let kind = self.dist_kind(samples.dim())?;
        const NODE_BLOCK: usize = 64;
        let nodes = self.side * self.side;
        let mut best = vec![(f64::INFINITY, 0usize); samples.len()];
        let mut block_start = 0;
        while block_start < nodes {
            let block_end = (block_start + NODE_BLOCK).min(nodes);
            for (entry, sample) in best.iter_mut().zip(samples.iter()) {
                for node in block_start..block_end {
                    let d = self.node_dist2(node, sample, kind);
                    if d < entry.0 {
                        *entry = (d, node);
                    }
                }
            }
            block_start = block_end;
        }
        Ok(best)
    }

    /// The match operator: BMU coordinates as a 2-vector `[row, col]`.
    pub fn match_coords(&self, input: &[f64]) -> Result<[f64; 2], SomError> {
        let bmu = self.find_bmu(input)?;
        Ok([bmu.row as f64, bmu.col as f64])
    }

    /// Approximate inverse of the match operator: the full stored vector of
    /// the node at `coord`, regardless of any channel mask.
    pub fn inverse_match(&self, coord: GridCoord) -> Result<Vec<f64>, SomError> {
        if coord.row >= self.side || coord.col >= self.side {
            return Err(SomError::CoordOutOfRange {
                row: coord.row,
                col: coord.col,
                side: self.side,
            });
        }
        Ok(self.vector(coord.row, coord.col).to_vec())
    }

    /// Mean Euclidean distance from each sample to its BMU vector.
    pub fn quantization_error(&self, samples: &SampleSet) -> Result<f64, SomError> {
        if samples.is_empty() {
            return Err(SomError::EmptySamples);
        }
        let best = self.batch_best(samples)?;
        let total: f64 = best.iter().map(|(d2, _)| d2.sqrt()).sum();
        Ok(total / samples.len() as f64)
    }

    fn qe_strided(&self, samples: &SampleSet) -> (f64, usize) {
        let stride = samples.len().div_ceil(QE_STATS_CAP).max(1);
        let mut subset = SampleSet::with_capacity(samples.dim(), samples.len() / stride + 1);
        let mut i = 0;
        while i < samples.len() {
            subset.push(samples.get(i));
            i += stride;
        }
        let qe = self
            .quantization_error(&subset)
            .expect("strided subset of a nonempty set is nonempty");
        (qe, subset.len())
    }

    /// One application of the update rule at step `t`:
    /// `φ ← φ + L(t) · N(bmu, node, R(t)) · (input − φ)` for every node, where
    /// nodes at grid distance ≥ R(t) have weight exactly 0 and are untouched.
    ///
    /// `input` must carry all `dim` components (updates write every channel;
    /// BMU selection still honors the mask, if one is set). On a 1×1 grid the
    /// radius schedule is undefined and the single node uses weight 1.
    pub fn train_step(
        &mut self,
        input: &[f64],
        t: usize,
        params: &TrainParams,
    ) -> Result<(), SomError> {
        if input.len() != self.dim {
            return Err(SomError::DimensionMismatch {
                expected: self.dim,
                input: input.len(),
            });
        }
        let bmu = self.find_bmu(input)?;
        let rate = learning_rate(params.base_rate, t, params.iterations);
        if self.side == 1 {
            let node = self.vectors.as_mut_slice();
            for (w, &x) in node.iter_mut().zip(input) {
                *w += rate * (x - *w);
            }
            return Ok(());
        }
        let r_t = radius(t, params.iterations, self.side)?;
        // Nodes outside the radius get exactly weight 0, so only the
        // enclosing box needs visiting; integer distance d satisfies
        // d < r_t  =>  d <= ceil(r_t) - 1.
        let reach = (r_t.ceil() as usize).saturating_sub(1);
        let row_range = bmu.row.saturating_sub(reach)..=(bmu.row + reach).min(self.side - 1);
        for row in row_range {
            let col_range = bmu.col.saturating_sub(reach)..=(bmu.col + reach).min(self.side - 1);
            for col in col_range {
                let w = neighborhood_weight(bmu, GridCoord::new(row, col), r_t);
                if w > 0.0 {
                    let i = (row * self.side + col) * self.dim;
                    let node = &mut self.vectors[i..i + self.dim];
                    let step = rate * w;
                    for (phi, &x) in node.iter_mut().zip(input) {
                        *phi += step * (x - *phi);
                    }
                }
            }
        }
        Ok(())
    }

    /// Train for `params.iterations` steps, each drawing one sample uniformly
    /// at random from `samples` (seeded by `params.seed`). Zero iterations
    /// leave the grid unchanged; stats are still measured.
    pub fn train(
        &mut self,
        samples: &SampleSet,
        params: &TrainParams,
    ) -> Result<TrainingStats, SomError> {
        if samples.is_empty() {
            return Err(SomError::EmptySamples);
        }
        if samples.dim() != self.dim {
            return Err(SomError::DimensionMismatch {
                expected: self.dim,
                input: samples.dim(),
            });
        }
        let (initial_qe, qe_samples) = self.qe_strided(samples);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for t in 0..params.iterations {
            let pick = rng.random_range(0..samples.len());
            self.train_step(samples.get(pick), t, params)?;
        }
        let (final_qe, _) = self.qe_strided(samples);
        Ok(TrainingStats {
            initial_qe,
            final_qe,
            qe_samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid_from(side: usize, dim: usize, vals: &[f64]) -> SomGrid {
        SomGrid::from_vectors(side, dim, vals.to_vec())
    }

    fn set_of(dim: usize, rows: &[&[f64]]) -> SampleSet {
        let mut s = SampleSet::new(dim);
        for r in rows {
            s.push(r);
        }
        s
    }

    #[test]
    fn new_grid_is_deterministic_per_seed() {
        let a = SomGrid::new(5, 7, 42);
        let b = SomGrid::new(5, 7, 42);
        let c = SomGrid::new(5, 7, 43);
        assert_eq!(a.components(), b.components());
        assert_ne!(a.components(), c.components());
    }

    #[test]
    fn new_grid_components_stay_in_init_span() {
        let g = SomGrid::new(9, 11, 7);
        assert!(g
            .components()
            .iter()
            .all(|&x| (0.0..INIT_SPAN).contains(&x)));
    }

    #[test]
    fn learning_rate_matches_closed_form() {
        assert_relative_eq!(learning_rate(0.9, 0, 1000), 0.9);
        // 0.9 / e and 0.9 / sqrt(e), computed independently.
        assert_relative_eq!(
            learning_rate(0.9, 1000, 1000),
            0.331091,
            max_relative = 1e-5
        );
        assert_relative_eq!(learning_rate(0.9, 500, 1000), 0.545878, max_relative = 1e-5);
    }

    #[test]
    fn radius_endpoints_and_degenerate_side() {
        assert_relative_eq!(radius(0, 100, 20).unwrap(), 10.0);
        assert_relative_eq!(radius(100, 100, 20).unwrap(), 1.0);
        assert_relative_eq!(radius(0, 100, 2).unwrap(), 1.0);
        assert_eq!(radius(0, 100, 1), Err(SomError::DegenerateSide { side: 1 }));
        assert_eq!(radius(0, 100, 0), Err(SomError::DegenerateSide { side: 0 }));
    }

    #[test]
    fn radius_is_monotone_nonincreasing() {
        let mut prev = f64::INFINITY;
        for t in 0..=500 {
            let r = radius(t, 500, 30).unwrap();
            assert!(r <= prev + 1e-12, "radius rose at t={t}");
            prev = r;
        }
    }

    #[test]
    fn neighborhood_weight_known_values() {
        let bmu = GridCoord::new(3, 3);
        assert_relative_eq!(neighborhood_weight(bmu, bmu, 2.0), 1.0);
        // g = 1, r = sqrt(2): exp(-1/2)
        let w = neighborhood_weight(bmu, GridCoord::new(3, 4), 2.0f64.sqrt());
        assert_relative_eq!(w, 0.606531, max_relative = 1e-5);
        // at or beyond the radius: exactly zero
        assert_eq!(neighborhood_weight(bmu, GridCoord::new(3, 5), 2.0), 0.0);
        assert_eq!(neighborhood_weight(bmu, GridCoord::new(0, 0), 2.0), 0.0);
    }

    #[test]
    fn find_bmu_picks_exact_match() {
        let mut vals = vec![0.5f64; 5 * 5 * 3];
        let target = [0.9, 0.1, 0.4];
        let node = (2 * 5 + 3) * 3;
        vals[node..node + 3].copy_from_slice(&target);
        let g = grid_from(5, 3, &vals);
        assert_eq!(g.find_bmu(&target).unwrap(), GridCoord::new(2, 3));
    }

    #[test]
    fn find_bmu_breaks_ties_lexicographically() {
        let g = grid_from(4, 2, &[0.25; 4 * 4 * 2]);
        assert_eq!(g.find_bmu(&[0.7, 0.7]).unwrap(), GridCoord::new(0, 0));
    }

    #[test]
    fn find_bmu_on_unit_grid_and_dim_mismatch() {
        let g = grid_from(1, 2, &[0.1, 0.2]);
        assert_eq!(g.find_bmu(&[5.0, 5.0]).unwrap(), GridCoord::new(0, 0));
        assert_eq!(
            g.find_bmu(&[1.0]),
            Err(SomError::DimensionMismatch {
                expected: 2,
                input: 1
            })
        );
    }

    #[test]
    fn masked_bmu_ignores_unmasked_channels() {
        // On channel 0 alone node (0,1) wins; consulting channel 1 would
        // flip the answer to (0,0).
        let mut g = grid_from(2, 2, &[0.5, 0.0, 0.4, 9.0, 9.9, 9.9, 9.9, 9.9]);
        g.set_channel_mask(vec![0]).unwrap();
        // full-length input: unmasked channel is ignored
        assert_eq!(g.find_bmu(&[0.41, 0.0]).unwrap(), GridCoord::new(0, 1));
        // mask-length input works too and agrees
        assert_eq!(g.find_bmu(&[0.41]).unwrap(), GridCoord::new(0, 1));
    }

    #[test]
    fn masked_gather_handles_non_prefix_masks() {
        let mut g = grid_from(
            2,
            3,
            &[0.0, 5.0, 1.0, 0.0, 5.0, 0.2, 1.0, 5.0, 1.0, 1.0, 5.0, 0.0],
        );
        g.set_channel_mask(vec![0, 2]).unwrap();
        // mask-length input: (input[0], input[1]) against (vec[0], vec[2])
        assert_eq!(g.find_bmu(&[0.0, 0.25]).unwrap(), GridCoord::new(0, 1));
        // full-length input: positions 0 and 2 compared, position 1 ignored
        assert_eq!(g.find_bmu(&[1.0, 0.1, 1.0]).unwrap(), GridCoord::new(1, 0));
    }

    #[test]
    fn channel_mask_validation() {
        let mut g = SomGrid::new(2, 3, 0);
        assert_eq!(
            g.set_channel_mask(vec![]),
            Err(SomError::InvalidMask { dim: 3 })
        );
        assert_eq!(
            g.set_channel_mask(vec![0, 3]),
            Err(SomError::InvalidMask { dim: 3 })
        );
        assert_eq!(
            g.set_channel_mask(vec![1, 1]),
            Err(SomError::InvalidMask { dim: 3 })
        );
        assert_eq!(
            g.set_channel_mask(vec![2, 0]),
            Err(SomError::InvalidMask { dim: 3 })
        );
        assert!(g.set_channel_mask(vec![0, 2]).is_ok());
        g.clear_channel_mask();
        assert!(g.channel_mask().is_none());
    }

    #[test]
    fn inverse_match_returns_full_stored_vector() {
        let mut g = grid_from(2, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        g.set_channel_mask(vec![0]).unwrap();
        assert_eq!(
            g.inverse_match(GridCoord::new(1, 0)).unwrap(),
            vec![0.5, 0.6]
        );
        assert_eq!(
            g.inverse_match(GridCoord::new(2, 0)),
            Err(SomError::CoordOutOfRange {
                row: 2,
                col: 0,
                side: 2
            })
        );
    }

    #[test]
    fn match_then_inverse_match_roundtrips_distinct_vectors() {
        let vals: Vec<f64> = (0..3 * 3 * 2).map(|i| i as f64).collect();
        let g = grid_from(3, 2, &vals);
        for row in 0..3 {
            for col in 0..3 {
                let v = g.vector(row, col).to_vec();
                let m = g.match_coords(&v).unwrap();
                assert_eq!(m, [row as f64, col as f64]);
                assert_eq!(g.inverse_match(GridCoord::new(row, col)).unwrap(), v);
            }
        }
    }

    #[test]
    fn quantization_error_examples() {
        let g = grid_from(2, 1, &[0.0, 1.0, 2.0, 3.0]);
        let exact = set_of(1, &[&[0.0], &[3.0]]);
        assert_relative_eq!(g.quantization_error(&exact).unwrap(), 0.0);
        // distances 0.25 and 0.5 -> mean 0.375
        let off = set_of(1, &[&[0.25], &[2.5]]);
        assert_relative_eq!(g.quantization_error(&off).unwrap(), 0.375);
        assert_eq!(
            g.quantization_error(&SampleSet::new(1)),
            Err(SomError::EmptySamples)
        );
    }

    #[test]
    fn train_step_matches_hand_applied_update_rule() {
        // 4x4 grid, dim 1, vectors r*4+c scaled by 0.1; input 0.74 makes
        // (1,3) the BMU. At t=0 with t_m=100 the radius is exactly 2, so the
        // update touches the six in-grid nodes at distance < 2 and no others.
        let vals: Vec<f64> = (0..16).map(|i| i as f64 / 10.0).collect();
        let mut g = grid_from(4, 1, &vals);
        let params = TrainParams::new(100, 0);
        g.train_step(&[0.74], 0, &params).unwrap();

        let l = 0.9;
        let w1 = (-1.0f64 / 4.0).exp(); // g = 1
        let w2 = (-2.0f64 / 4.0).exp(); // g = sqrt(2)
        let expect = |phi: f64, w: f64| phi + l * w * (0.74 - phi);
        assert_relative_eq!(g.vector(1, 3)[0], expect(0.7, 1.0), max_relative = 1e-12);
        assert_relative_eq!(g.vector(0, 3)[0], expect(0.3, w1), max_relative = 1e-12);
        assert_relative_eq!(g.vector(2, 3)[0], expect(1.1, w1), max_relative = 1e-12);
        assert_relative_eq!(g.vector(1, 2)[0], expect(0.6, w1), max_relative = 1e-12);
        assert_relative_eq!(g.vector(0, 2)[0], expect(0.2, w2), max_relative = 1e-12);
        assert_relative_eq!(g.vector(2, 2)[0], expect(1.0, w2), max_relative = 1e-12);
        // a sample of untouched nodes, including the g = 2 ring
        for (r, c) in [(3, 3), (3, 2), (1, 1), (0, 0), (2, 1)] {
            assert_eq!(g.vector(r, c)[0], vals[r * 4 + c], "node ({r},{c}) moved");
        }
    }

    #[test]
    fn train_step_bmu_vector_is_fixed_point() {
        let vals: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let mut g = grid_from(3, 1, &vals);
        g.train_step(&[4.0], 0, &TrainParams::new(10, 0)).unwrap();
        assert_eq!(g.vector(1, 1)[0], 4.0);
    }

    #[test]
    fn train_step_on_unit_grid_uses_weight_one() {
        let mut g = grid_from(1, 2, &[0.0, 1.0]);
        g.train_step(&[1.0, 0.0], 0, &TrainParams::new(10, 0))
            .unwrap();
        assert_relative_eq!(g.vector(0, 0)[0], 0.9);
        assert_relative_eq!(g.vector(0, 0)[1], 1.0 + 0.9 * (0.0 - 1.0));
    }

    #[test]
    fn train_zero_iterations_leaves_grid_unchanged() {
        let mut g = SomGrid::new(4, 3, 9);
        let before = g.components().to_vec();
        let stats = g
            .train(&set_of(3, &[&[0.1, 0.2, 0.3]]), &TrainParams::new(0, 1))
            .unwrap();
        assert_eq!(g.components(), &before[..]);
        assert_eq!(stats.initial_qe, stats.final_qe);
    }

    #[test]
    fn train_rejects_empty_or_mismatched_samples() {
        let mut g = SomGrid::new(2, 2, 0);
        assert_eq!(
            g.train(&SampleSet::new(2), &TrainParams::new(5, 0)),
            Err(SomError::EmptySamples)
        );
        assert_eq!(
            g.train(&set_of(3, &[&[1.0, 2.0, 3.0]]), &TrainParams::new(5, 0)),
            Err(SomError::DimensionMismatch {
                expected: 2,
                input: 3
            })
        );
    }

    #[test]
    fn train_converges_to_a_repeated_sample() {
        let mut g = SomGrid::new(1, 2, 3);
        let target = [0.8, 0.15];
        g.train(&set_of(2, &[&target]), &TrainParams::new(200, 5))
            .unwrap();
        assert_relative_eq!(g.vector(0, 0)[0], target[0], epsilon = 1e-9);
        assert_relative_eq!(g.vector(0, 0)[1], target[1], epsilon = 1e-9);
    }

    #[test]
    fn train_is_reproducible_for_a_fixed_seed() {
        let samples = {
            let mut s = SampleSet::new(4);
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            for _ in 0..50 {
                let v: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                s.push(&v);
            }
            s
        };
        let params = TrainParams::new(300, 21);
        let mut a = SomGrid::new(5, 4, 2);
        let mut b = SomGrid::new(5, 4, 2);
        let sa = a.train(&samples, &params).unwrap();
        let sb = b.train(&samples, &params).unwrap();
        assert_eq!(a.components(), b.components());
        assert_eq!(sa, sb);
        assert!(
            sa.final_qe <= sa.initial_qe,
            "training should not hurt QE here"
        );
    }

    #[test]
    fn truncated_keeps_leading_components() {
        let g = grid_from(2, 3, &(0..12).map(|i| i as f64).collect::<Vec<_>>());
        let t = g.truncated(2);
        assert_eq!(t.dim(), 2);
        assert_eq!(t.vector(0, 1), &[3.0, 4.0]);
        assert_eq!(t.vector(1, 1), &[9.0, 10.0]);
    }

    fn brute_force_bmu(g: &SomGrid, input: &[f64]) -> GridCoord {
        let mut best = (f64::INFINITY, GridCoord::new(0, 0));
        for row in 0..g.side() {
            for col in 0..g.side() {
                let d: f64 = g
                    .vector(row, col)
                    .iter()
                    .zip(input)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best.0 {
                    best = (d, GridCoord::new(row, col));
                }
            }
        }
        best.1
    }

    proptest! {
        #[test]
        fn prop_find_bmu_agrees_with_brute_force(
            side in 1usize..=10,
            dim in 1usize..=16,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f64> = (0..side * side * dim).map(|_| rng.random::<f64>()).collect();
            let g = SomGrid::from_vectors(side, dim, vals);
            let input: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            prop_assert_eq!(g.find_bmu(&input).unwrap(), brute_force_bmu(&g, &input));
        }

        #[test]
        fn prop_match_batch_equals_per_sample_bmu(
            side in 1usize..=9,
            dim in 1usize..=8,
            n in 1usize..=40,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f64> = (0..side * side * dim).map(|_| rng.random::<f64>()).collect();
            let g = SomGrid::from_vectors(side, dim, vals);
            let mut samples = SampleSet::new(dim);
            for _ in 0..n {
                let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                samples.push(&v);
            }
            let batch = g.match_batch(&samples).unwrap();
            for (i, coord) in batch.iter().enumerate() {
                prop_assert_eq!(*coord, g.find_bmu(samples.get(i)).unwrap());
            }
        }

        #[test]
        fn prop_schedules_stay_in_bounds(
            t_m in 1usize..=1_000_000,
            frac in 0.0f64..=1.0,
            side in 2usize..=300,
        ) {
            let t = ((t_m as f64) * frac) as usize;
            let lr = learning_rate(DEFAULT_BASE_RATE, t, t_m);
            prop_assert!(lr > 0.0 && lr <= DEFAULT_BASE_RATE);
            let r = radius(t, t_m, side).unwrap();
            prop_assert!((1.0..=0.5 * side as f64).contains(&r));
        }

        #[test]
        fn prop_neighborhood_weight_in_unit_interval(
            br in 0usize..40, bc in 0usize..40,
            nr in 0usize..40, nc in 0usize..40,
            r_t in 0.5f64..25.0,
        ) {
            let w = neighborhood_weight(GridCoord::new(br, bc), GridCoord::new(nr, nc), r_t);
            prop_assert!((0.0..=1.0).contains(&w));
        }

        #[test]
        fn prop_train_step_moves_bmu_closer_and_spares_distant_nodes(
            seed in any::<u64>(),
            side in 2usize..=8,
            t in 0usize..50,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 3;
            let vals: Vec<f64> = (0..side * side * dim).map(|_| rng.random::<f64>()).collect();
            let mut g = SomGrid::from_vectors(side, dim, vals);
            let input: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let params = TrainParams::new(50, 0);
            let bmu = g.find_bmu(&input).unwrap();
            let before = g.components().to_vec();
            let d_before: f64 = sq_dist(g.vector(bmu.row, bmu.col), &input);
            let r_t = radius(t, params.iterations, side).unwrap();
            g.train_step(&input, t, &params).unwrap();
            let d_after: f64 = sq_dist(g.vector(bmu.row, bmu.col), &input);
            prop_assert!(d_after <= d_before + 1e-15);
            for row in 0..side {
                for col in 0..side {
                    if neighborhood_weight(bmu, GridCoord::new(row, col), r_t) == 0.0 {
                        let i = (row * side + col) * dim;
                        prop_assert_eq!(&g.components()[i..i + dim], &before[i..i + dim]);
                    }
                }
            }
        }
    }
}
