use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of the gaze heatmap grid.
pub const HEATMAP_SIDE: usize = 64;
/// Standard deviation of the target Gaussian, in grid cells.
pub const HEATMAP_SIGMA: f64 = 3.0;

/// Integer cell on the heatmap grid; `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub x: usize,
    pub y: usize,
}

impl GridCell {
    /// Cell containing a normalised point, `round(p × 63)` per axis.
    pub fn of_point(p: [f64; 2]) -> Self {
        let scale = (HEATMAP_SIDE - 1) as f64;
        GridCell {
            x: (p[0].clamp(0.0, 1.0) * scale).round() as usize,
            y: (p[1].clamp(0.0, 1.0) * scale).round() as usize,
        }
    }

    pub fn distance(&self, other: &GridCell) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

/// 64×64 gaze-probability grid stored row-major (row = y).
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapTarget {
    grid: Vec<f64>,
}

impl HeatmapTarget {
    pub fn from_grid(grid: Vec<f64>) -> Result<Self> {
        if grid.len() != HEATMAP_SIDE * HEATMAP_SIDE {
            return Err(Error::Shape(format!(
                "heatmap grid has {} cells, expected {}",
                grid.len(),
                HEATMAP_SIDE * HEATMAP_SIDE
            )));
        }
        Ok(HeatmapTarget { grid })
    }

    pub fn at(&self, cell: GridCell) -> f64 {
        self.grid[cell.y * HEATMAP_SIDE + cell.x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.grid
    }

    pub fn argmax(&self) -> GridCell {
        argmax_cell(&self.grid)
    }
}

/// Argmax of a row-major 64×64 grid (first maximum wins).
pub fn argmax_cell(grid: &[f64]) -> GridCell {
    let i = crate::data::argmax(grid);
    GridCell {
        x: i % HEATMAP_SIDE,
        y: i / HEATMAP_SIDE,
    }
}

/// Unnormalised Gaussian with peak 1.0 centred on the gaze point's cell.
pub fn build_heatmap_target(gaze_point: [f64; 2]) -> Result<HeatmapTarget> {
    for v in gaze_point {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid("gaze_point", format!("{v} is outside [0, 1]")));
        }
    }
    let peak = GridCell::of_point(gaze_point);
    let denom = 2.0 * HEATMAP_SIGMA * HEATMAP_SIGMA;
    let mut grid = vec![0.0; HEATMAP_SIDE * HEATMAP_SIDE];
    for r in 0..HEATMAP_SIDE {
        let dr = r as f64 - peak.y as f64;
        for c in 0..HEATMAP_SIDE {
            let dc = c as f64 - peak.x as f64;
            grid[r * HEATMAP_SIDE + c] = (-(dr * dr + dc * dc) / denom).exp();
        }
    }
    Ok(HeatmapTarget { grid })
}
