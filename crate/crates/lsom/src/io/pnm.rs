//! Binary PNM writers: single images as 8-bit PGM (P5), grid montages as
//! PGM or color PPM (P6) with one-pixel black separators between tiles.

use super::DataError;
use crate::lattice::Lattice;
use crate::som::SomGrid;

/// How montage tiles map cell vectors to pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MontageMode {
    /// Scalar cells rendered as gray levels (values clamped into [0, 1]).
    Gray,
    /// 2-component cells rendered as red = first / scale_max,
    /// blue = second / scale_max, green = 0 — for coordinate vectors.
    RedBlue,
}

fn to_byte(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

/// Encode a scalar lattice as a binary PGM image, one byte per cell,
/// values clamped into [0, 1] and scaled to 0–255.
pub fn export_pgm(image: &Lattice) -> Result<Vec<u8>, DataError> {
    if image.dim() != 1 {
        return Err(DataError::NotScalar { dim: image.dim() });
    }
    let side = image.side();
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend(image.as_slice().iter().map(|&x| to_byte(x)));
    Ok(out)
}

/// Render every node of a grid as a `p × p` tile in a single image, with a
/// one-pixel black frame around and between tiles (canvas side
/// `k·(p+1) + 1`). The grid dimension must equal `p² · d` for the cell shape
/// `(p, p, d)`; `Gray` needs `d = 1` (PGM output), `RedBlue` needs `d = 2`
/// (PPM output, components scaled by `1 / scale_max`).
pub fn export_grid_montage(
    grid: &SomGrid,
    cell_shape: (usize, usize, usize),
    mode: MontageMode,
    scale_max: f64,
) -> Result<Vec<u8>, DataError> {
    let (p, p2, d) = cell_shape;
    if p == 0 || p != p2 || d == 0 || p * p * d != grid.dim() {
        return Err(DataError::MontageShape {
            dim: grid.dim(),
            p,
            d,
        });
    }
    let expected = match mode {
        MontageMode::Gray => 1,
        MontageMode::RedBlue => 2,
    };
    if d != expected {
        return Err(DataError::MontageCellDim {
            expected,
            actual: d,
        });
    }
    if !(scale_max > 0.0 && scale_max.is_finite()) {
        return Err(DataError::BadScale);
    }

    let k = grid.side();
    let canvas = k * (p + 1) + 1;
    let channels = match mode {
        MontageMode::Gray => 1,
        MontageMode::RedBlue => 3,
    };
    let mut pixels = vec![0u8; canvas * canvas * channels];
    for grow in 0..k {
        for gcol in 0..k {
            let vec = grid.vector(grow, gcol);
            let (top, left) = (grow * (p + 1) + 1, gcol * (p + 1) + 1);
            for pr in 0..p {
                for pc in 0..p {
                    let cell = &vec[(pr * p + pc) * d..(pr * p + pc + 1) * d];
                    let at = ((top + pr) * canvas + left + pc) * channels;
                    match mode {
                        MontageMode::Gray => pixels[at] = to_byte(cell[0]),
                        MontageMode::RedBlue => {
                            pixels[at] = to_byte(cell[0] / scale_max);
                            pixels[at + 1] = 0;
                            pixels[at + 2] = to_byte(cell[1] / scale_max);
                        }
                    }
                }
            }
        }
    }
    let header = match mode {
        MontageMode::Gray => format!("P5\n{canvas} {canvas}\n255\n"),
        MontageMode::RedBlue => format!("P6\n{canvas} {canvas}\n255\n"),
    };
    let mut out = header.into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}
