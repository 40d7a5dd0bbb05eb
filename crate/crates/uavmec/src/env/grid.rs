//! Binary visit grids over the service area.

use serde::{Deserialize, Serialize};

/// Square boolean grid, row-major. Row index follows the y axis, column
/// index the x axis; cell side length is fixed by the owning configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridMap {
    dim: usize,
    cells: Vec<bool>,
}

impl GridMap {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "grid dimension must be positive");
        GridMap {
            dim,
            cells: vec![false; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.dim + col]
    }

    pub fn mark(&mut self, row: usize, col: usize) {
        self.cells[row * self.dim + col] = true;
    }

    /// In-place OR with another grid of the same dimension.
    pub fn or_with(&mut self, other: &GridMap) {
        assert_eq!(self.dim, other.dim, "grid dimension mismatch");
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a |= *b;
        }
    }

    pub fn count_marked(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// One `'0'`/`'1'` character per cell, row-major; used in traces.
    pub fn to_bitstring(&self) -> String {
        self.cells.iter().map(|&c| if c { '1' } else { '0' }).collect()
    }
}

/// Cell coordinates (row, col) of a position, clamping the far edges into
/// the last cell so `x == area_size` stays on the grid.
pub fn cell_of(pos: [f64; 2], cell_size: f64, dim: usize) -> (usize, usize) {
    let col = ((pos[0] / cell_size).floor() as usize).min(dim - 1);
    let row = ((pos[1] / cell_size).floor() as usize).min(dim - 1);
    (row, col)
}
