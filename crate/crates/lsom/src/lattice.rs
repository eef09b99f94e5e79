//! Square lattices and the scan operator.
//!
//! A lattice is a `side × side` arrangement of equal-length cell vectors.
//! `scan` slides a `p × p` window across it with stride `v` and flattens each
//! view into one long vector; `inverse_scan` scatters window vectors back,
//! averaging wherever windows overlapped. Together with the match operator
//! these are the glue between the layers of an architecture.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("{name} must be at least 1")]
    ZeroParameter { name: &'static str },
    #[error("window side {p} exceeds lattice side {s}")]
    WindowTooLarge { p: usize, s: usize },
    #[error("stride {v} exceeds window side {p}: windows would leave cells uncovered")]
    StrideTooLarge { v: usize, p: usize },
    #[error("({s} - {p}) is not divisible by stride {v}: windows would not tile the lattice")]
    NonIntegralGeometry { s: usize, p: usize, v: usize },
    #[error("lattice side {actual} does not match the geometry's expected side {expected}")]
    GeometryMismatch { expected: usize, actual: usize },
    #[error("window dimension {dim} is not divisible by {p}x{p} cells")]
    NonIntegralCellDim { dim: usize, p: usize },
}

/// A square arrangement of `dim`-component cells, stored row-major in one
/// flat buffer (cell components contiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    side: usize,
    dim: usize,
    cells: Vec<f64>,
}

impl Lattice {
    pub fn zeros(side: usize, dim: usize) -> Self {
        assert!(
            side >= 1 && dim >= 1,
            "lattice side and dimension must be positive"
        );
        Lattice {
            side,
            dim,
            cells: vec![0.0; side * side * dim],
        }
    }

    pub fn from_cells(side: usize, dim: usize, cells: Vec<f64>) -> Self {
        assert!(
            side >= 1 && dim >= 1,
            "lattice side and dimension must be positive"
        );
        assert_eq!(
            cells.len(),
            side * side * dim,
            "cell buffer length mismatch"
        );
        Lattice { side, dim, cells }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        assert!(
            row < self.side && col < self.side,
            "cell index out of range"
        );
        let i = (row * self.side + col) * self.dim;
        &self.cells[i..i + self.dim]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        assert!(
            row < self.side && col < self.side,
            "cell index out of range"
        );
        let i = (row * self.side + col) * self.dim;
        &mut self.cells[i..i + self.dim]
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = &[f64]> {
        self.cells.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.cells
    }

    /// `count` consecutive cells of one row as a single flat slice.
    fn row_span(&self, row: usize, col: usize, count: usize) -> &[f64] {
        debug_assert!(col + count <= self.side);
        let i = (row * self.side + col) * self.dim;
        &self.cells[i..i + count * self.dim]
    }
}

/// Validated window geometry over a lattice of side `s`: `p × p` windows at
/// stride `v` produce a `u × u` lattice of windows, `u = (s − p) / v + 1`.
///
/// Construct via [`output_side`], which guarantees the windows tile the
/// lattice exactly and leave no cell uncovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowGeometry {
    s: usize,
    p: usize,
    v: usize,
    u: usize,
}

impl WindowGeometry {
    /// Input lattice side.
    pub fn s(&self) -> usize {
        self.s
    }

    /// Window side.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Stride.
    pub fn v(&self) -> usize {
        self.v
    }

    /// Output lattice side.
    pub fn u(&self) -> usize {
        self.u
    }
}

/// Derive the output side for `p × p` windows at stride `v` over a lattice of
/// side `s`, validating that the windows fit exactly and cover every cell:
/// `1 ≤ v ≤ p ≤ s` and `v` divides `s − p`.
pub fn output_side(s: usize, p: usize, v: usize) -> Result<WindowGeometry, LatticeError> {
    if s == 0 {
        return Err(LatticeError::ZeroParameter {
            name: "lattice side",
        });
    }
    if p == 0 {
        return Err(LatticeError::ZeroParameter {
            name: "window side",
        });
    }
    if v == 0 {
        return Err(LatticeError::ZeroParameter { name: "stride" });
    }
    if p > s {
        return Err(LatticeError::WindowTooLarge { p, s });
    }
    if v > p {
        return Err(LatticeError::StrideTooLarge { v, p });
    }
    if !(s - p).is_multiple_of(v) {
        return Err(LatticeError::NonIntegralGeometry { s, p, v });
    }
    Ok(WindowGeometry {
        s,
        p,
        v,
        u: (s - p) / v + 1,
    })
}

/// The scan operator: flatten every `p × p` window of `input` into one cell
/// of a `u × u` lattice of dimension `p² · input.dim()`.
///
/// Window (m, n) covers input cells `(m·v + wr, n·v + wc)` for
/// `wr, wc < p`; its vector lists those cells window-row-major with each
/// cell's components contiguous.
pub fn scan(input: &Lattice, geom: &WindowGeometry) -> Result<Lattice, LatticeError> {
    if input.side() != geom.s {
        return Err(LatticeError::GeometryMismatch {
            expected: geom.s,
            actual: input.side(),
        });
    }
    let (p, v, u, d) = (geom.p, geom.v, geom.u, input.dim());
    let row_len = p * d;
    let mut out = Lattice::zeros(u, p * row_len);
    for m in 0..u {
        for n in 0..u {
            let window = out.cell_mut(m, n);
            for wr in 0..p {
                let src = input.row_span(m * v + wr, n * v, p);
                window[wr * row_len..(wr + 1) * row_len].copy_from_slice(src);
            }
        }
    }
    Ok(out)
}

/// Post-processing applied to each averaged component of an inverse scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rounding {
    /// Leave the averages untouched.
    MeanOnly,
    /// Round half-to-even, then clamp into `[0, max]` — for reconstructing
    /// integer coordinate lattices.
    Round { max: f64 },
    /// Clamp into `[0, 1]` without rounding — for reconstructing images.
    ClampUnit,
}

/// Approximate inverse of [`scan`]: scatter each window vector back onto the
/// `s × s` lattice, resolving overlaps by arithmetic mean.
///
/// The mean is kept as a running mean per cell component, updated window by
/// window in row-major order: `m ← m + (x − m) / count`. Identical
/// contributions therefore reproduce the original value exactly. The window
/// dimension must be `p²` times an integral cell dimension.
pub fn inverse_scan(
    windows: &Lattice,
    geom: &WindowGeometry,
    rounding: Rounding,
) -> Result<Lattice, LatticeError> {
    if windows.side() != geom.u {
        return Err(LatticeError::GeometryMismatch {
            expected: geom.u,
            actual: windows.side(),
        });
    }
    let (p, v, u, s) = (geom.p, geom.v, geom.u, geom.s);
    if !windows.dim().is_multiple_of(p * p) {
        return Err(LatticeError::NonIntegralCellDim {
            dim: windows.dim(),
            p,
        });
    }
    let d = windows.dim() / (p * p);
    let mut out = Lattice::zeros(s, d);
    let mut counts = vec![0u32; s * s];
    for m in 0..u {
        for n in 0..u {
            let window = windows.cell(m, n);
            for wr in 0..p {
                for wc in 0..p {
                    let (row, col) = (m * v + wr, n * v + wc);
                    counts[row * s + col] += 1;
                    let k = counts[row * s + col] as f64;
                    let src = &window[(wr * p + wc) * d..(wr * p + wc + 1) * d];
                    let dst = out.cell_mut(row, col);
                    for (mean, &x) in dst.iter_mut().zip(src) {
                        *mean += (x - *mean) / k;
                    }
                }
            }
        }
    }
    debug_assert!(
        counts.iter().all(|&c| c > 0),
        "valid geometry covers every cell"
    );
    match rounding {
        Rounding::MeanOnly => {}
        Rounding::Round { max } => {
            for x in &mut out.cells {
                *x = x.round_ties_even().clamp(0.0, max);
            }
        }
        Rounding::ClampUnit => {
            for x in &mut out.cells {
                *x = x.clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}
