use super::{ConvexShape, Point};
use crate::error::{Error, Result};

/// Cells per side of the occupancy grid.
pub const GRID_SIZE: usize = 64;

/// 64x64 occupancy raster over the unit square; row 0 is at y-min.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OccupancyGrid {
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub const BYTES: usize = GRID_SIZE * GRID_SIZE / 8;

    pub fn empty() -> Self {
        OccupancyGrid { cells: vec![false; GRID_SIZE * GRID_SIZE] }
    }

    pub fn resolution() -> f64 {
        1.0 / GRID_SIZE as f64
    }

    pub fn cell_center(row: usize, col: usize) -> Point {
        let h = Self::resolution();
        Point::new((col as f64 + 0.5) * h, (row as f64 + 0.5) * h)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * GRID_SIZE + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.cells[row * GRID_SIZE + col] = v;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Row-major cells as 0.0/1.0, the encoder's input layout.
    pub fn as_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect()
    }

    /// Row-major bit packing, least significant bit first within each byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; Self::BYTES];
        for (i, &c) in self.cells.iter().enumerate() {
            if c {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != Self::BYTES {
            return Err(Error::Format(format!(
                "occupancy blob must be {} bytes, got {}",
                Self::BYTES,
                bytes.len()
            )));
        }
        let cells = (0..GRID_SIZE * GRID_SIZE).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(OccupancyGrid { cells })
    }

    /// Rows of 0/1 values, for JSON export.
    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.cells.chunks(GRID_SIZE).map(|r| r.iter().map(|&c| c as u8).collect()).collect()
    }
}

/// Center-point sampling; if no center is inside, the cell nearest the centroid is set.
pub fn rasterize(shape: &ConvexShape) -> OccupancyGrid {
    let mut grid = OccupancyGrid::empty();
    for row in 0..GRID_SIZE {
        for col in 0..GRID_SIZE {
            if shape.contains(OccupancyGrid::cell_center(row, col)) {
                grid.set(row, col, true);
            }
        }
    }
    if grid.count() == 0 {
        let c = shape.centroid();
        let clamp = |v: f64| ((v * GRID_SIZE as f64).floor().max(0.0) as usize).min(GRID_SIZE - 1);
        grid.set(clamp(c.y), clamp(c.x), true);
    }
    grid
}
