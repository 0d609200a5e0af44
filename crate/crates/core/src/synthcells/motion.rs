//! Brownian cell motion: each coordinate of each cell follows a discretized
//! Wiener process with `+-1/sqrt(n)` increments per frame.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rbc,
    Wbc,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub kind: CellKind,
    /// Position at frame zero, in pixels.
    pub origin: [f64; 2],
    /// Current rendered position, in pixels. May leave the frame.
    pub position: [f64; 2],
    /// Accumulated Wiener value per coordinate; zero at the start.
    pub wiener: [f64; 2],
    pub radius: f64,
}

impl Cell {
    pub fn new(kind: CellKind, origin: [f64; 2], radius: f64) -> Self {
        Cell {
            kind,
            origin,
            position: origin,
            wiener: [0.0; 2],
            radius,
        }
    }
}

/// `count` positions, i.i.d. uniform over `[0, width) x [0, height)`, as `[x, y]`.
pub fn init_positions<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    width: usize,
    height: usize,
) -> Vec<[f64; 2]> {
    let (w, h) = (width as f64, height as f64);
    (0..count)
        .map(|_| [rng.random::<f64>() * w, rng.random::<f64>() * h])
        .collect()
}

/// Advance one cell from step `i - 1` to step `i` of an `n`-step path:
/// `W(i/n) = W((i-1)/n) + Y/sqrt(n)` with `Y = +-1` per coordinate, then
/// `position = origin + motion_scale * W`.
pub fn wiener_step<R: Rng + ?Sized>(
    cell: &Cell,
    i: usize,
    n: usize,
    motion_scale: f64,
    rng: &mut R,
) -> Result<Cell> {
    if n == 0 || i == 0 || i > n {
        return Err(Error::out_of_range("step index i", i, "[1, n]"));
    }
    if !(motion_scale.is_finite() && motion_scale >= 0.0) {
        return Err(Error::out_of_range("motion_scale", motion_scale, "[0, inf)"));
    }
    let step = 1.0 / (n as f64).sqrt();
    let mut next = *cell;
    for d in 0..2 {
        let y = if rng.random::<bool>() { step } else { -step };
        next.wiener[d] += y;
        next.position[d] = cell.origin[d] + motion_scale * next.wiener[d];
    }
    Ok(next)
}
