//! Bit-exact model persistence: a little-endian binary archive holding the
//! spec, every grid (components and channel mask), the training stats, and
//! the top-node labeling. Loading re-runs full model validation.

use super::DataError;
use crate::arch::{ArchitectureSpec, LayerSpec, LsomModel};
use crate::som::{SomGrid, TrainParams, TrainingStats};

const MAGIC: &[u8; 4] = b"LSOM";
pub const ARCHIVE_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, x: f64) {
    out.extend_from_slice(&x.to_le_bytes());
}

/// Serialize a model. [`load_model`] restores it bit-for-bit.
pub fn save_model(model: &LsomModel) -> Vec<u8> {
    let spec = model.spec();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, ARCHIVE_VERSION);
    put_u32(&mut out, spec.input_side as u32);
    put_u32(&mut out, spec.num_classes as u32);
    put_f64(&mut out, spec.sup_scale);
    put_u32(&mut out, spec.layers.len() as u32);
    for (layer, params) in spec.layers.iter().zip(&spec.train) {
        put_u32(&mut out, layer.p as u32);
        put_u32(&mut out, layer.v as u32);
        put_u32(&mut out, layer.k as u32);
        put_u64(&mut out, params.iterations as u64);
        put_f64(&mut out, params.base_rate);
        put_u64(&mut out, params.seed);
    }
    for grid in model.grids() {
        put_u32(&mut out, grid.side() as u32);
        put_u32(&mut out, grid.dim() as u32);
        let mask = grid.channel_mask().unwrap_or(&[]);
        put_u32(&mut out, mask.len() as u32);
        for &m in mask {
            put_u32(&mut out, m as u32);
        }
        for &x in grid.components() {
            put_f64(&mut out, x);
        }
    }
    for stats in model.layer_stats() {
        put_f64(&mut out, stats.initial_qe);
        put_f64(&mut out, stats.final_qe);
        put_u64(&mut out, stats.qe_samples as u64);
    }
    for &class in model.class_map() {
        put_u32(&mut out, class as u32);
    }
    for &c in model.consistency() {
        put_f64(&mut out, c);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.buf.len() {
            return Err(DataError::CorruptArchive {
                reason: "archive ends mid-field",
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize32(&mut self) -> Result<usize, DataError> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, DataError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>, DataError> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Deserialize a model saved by [`save_model`], validating the payload as
/// strictly as a freshly trained model.
pub fn load_model(bytes: &[u8]) -> Result<LsomModel, DataError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(DataError::CorruptArchive {
            reason: "bad magic",
        });
    }
    let version = r.u32()?;
    if version != ARCHIVE_VERSION {
        return Err(DataError::UnknownVersion { version });
    }
    let input_side = r.usize32()?;
    let num_classes = r.usize32()?;
    let sup_scale = r.f64()?;
    let n_layers = r.usize32()?;
    if n_layers == 0 || n_layers > 64 {
        return Err(DataError::CorruptArchive {
            reason: "implausible layer count",
        });
    }
    let mut layers = Vec::with_capacity(n_layers);
    let mut train = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let (p, v, k) = (r.usize32()?, r.usize32()?, r.usize32()?);
        layers.push(LayerSpec::new(p, v, k));
        train.push(TrainParams {
            iterations: r.u64()? as usize,
            base_rate: r.f64()?,
            seed: r.u64()?,
        });
    }
    let spec = ArchitectureSpec {
        layers,
        input_side,
        num_classes,
        sup_scale,
        train,
    };

    let mut grids = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let side = r.usize32()?;
        let dim = r.usize32()?;
        if side == 0 || dim == 0 || side > 4096 || dim > 1 << 24 {
            return Err(DataError::CorruptArchive {
                reason: "implausible grid shape",
            });
        }
        let mask_len = r.usize32()?;
        let mask: Vec<usize> = (0..mask_len)
            .map(|_| r.usize32())
            .collect::<Result<_, _>>()?;
        let components = r.f64_vec(side * side * dim)?;
        let mut grid = SomGrid::from_vectors(side, dim, components);
        if !mask.is_empty() {
            grid.set_channel_mask(mask)
                .map_err(|_| DataError::CorruptArchive {
                    reason: "invalid channel mask",
                })?;
        }
        grids.push(grid);
    }

    let mut layer_stats = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layer_stats.push(TrainingStats {
            initial_qe: r.f64()?,
            final_qe: r.f64()?,
            qe_samples: r.u64()? as usize,
        });
    }

    let k_top = spec.layers[n_layers - 1].k;
    let class_map: Vec<usize> = (0..k_top * k_top)
        .map(|_| r.usize32())
        .collect::<Result<_, _>>()?;
    let consistency = r.f64_vec(k_top * k_top)?;
    if !r.done() {
        return Err(DataError::CorruptArchive {
            reason: "trailing bytes after payload",
        });
    }
    Ok(LsomModel::from_parts(
        spec,
        grids,
        class_map,
        consistency,
        layer_stats,
    )?)
}
