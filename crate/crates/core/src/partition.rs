//! Grid selection and patch layout.
//!
//! The grid is a fixed `N × N` arrangement of `S × S` cells. An image is
//! assigned the smallest `rows × cols` block of cells (anchored at the top
//! left) whose extent covers it, with each dimension clamped to `N`, and is
//! then stretched to exactly `cols·S × rows·S`. Cell `(r, c)` always carries
//! position id `(r − 1)·N + c`; id 0 is reserved for the global view.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};

/// Width and height of an RGB image in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    #[serde(rename = "w")]
    pub width: u32,
    #[serde(rename = "h")]
    pub height: u32,
}

impl ImageDims {
    pub const CHANNELS: u32 = 3;

    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDims { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn channels(&self) -> u32 {
        Self::CHANNELS
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }
}

/// Number of occupied cell rows and columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
}

impl GridSpec {
    pub fn new(rows: u32, cols: u32) -> Self {
        Self { rows, cols }
    }

    pub fn cell_count(&self) -> usize {
        (self.rows * self.cols) as usize
    }
}

/// One cell-sized crop of the resized image. Coordinates are half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchBox {
    pub row: u32,
    pub col: u32,
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    pub position_id: u32,
}

impl PatchBox {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

/// Everything needed to turn one image into its local patches.
///
/// Field order is part of the JSON format and must not change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub source: ImageDims,
    pub grid: GridSpec,
    pub resized: ImageDims,
    pub distortion: f64,
    pub patches: Vec<PatchBox>,
}

impl PartitionPlan {
    pub fn patch_count(&self) -> usize {
        self.patches.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(s)?;
        plan.check()?;
        Ok(plan)
    }

    /// Structural consistency: patches are row-major, equally sized and tile
    /// the resized image exactly.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPlan(msg));
        if self.grid.rows == 0 || self.grid.cols == 0 {
            return bad(format!("empty grid {:?}", self.grid));
        }
        if self.patches.len() != self.grid.cell_count() {
            return bad(format!(
                "{} patches for a {}x{} grid",
                self.patches.len(),
                self.grid.rows,
                self.grid.cols
            ));
        }
        let cell = self.resized.width / self.grid.cols;
        if cell == 0 || self.resized.width != cell * self.grid.cols || self.resized.height != cell * self.grid.rows {
            return bad(format!(
                "resized {}x{} is not a whole number of square cells",
                self.resized.width, self.resized.height
            ));
        }
        let expected = (1..=self.grid.rows).flat_map(|r| (1..=self.grid.cols).map(move |c| (r, c)));
        for (p, (r, c)) in self.patches.iter().zip(expected) {
            let (x0, y0) = ((c - 1) * cell, (r - 1) * cell);
            if (p.row, p.col) != (r, c) || (p.x0, p.y0, p.x1, p.y1) != (x0, y0, x0 + cell, y0 + cell) {
                return bad(format!("patch {p:?} is not cell ({r}, {c})"));
            }
        }
        Ok(())
    }
}

/// Smallest cell count covering `len` pixels, clamped to `[1, max]`.
fn cells_to_cover(len: u32, cell: u32, max: u32) -> u32 {
    len.div_ceil(cell).clamp(1, max)
}

/// Minimal `rows × cols` cover of the image, clamped to `N × N`.
pub fn select_grid(dims: ImageDims, config: &PipelineConfig) -> GridSpec {
    let s = config.cell_size_px;
    let n = config.max_grid;
    GridSpec {
        rows: cells_to_cover(dims.height, s, n),
        cols: cells_to_cover(dims.width, s, n),
    }
}

/// `max(ρ, 1/ρ)` where `ρ` is the grid aspect ratio over the image aspect
/// ratio. Equals 1 exactly when the stretch preserves aspect.
pub fn distortion_factor(dims: ImageDims, grid: GridSpec) -> f64 {
    let rho = (f64::from(grid.cols) * f64::from(dims.height)) / (f64::from(grid.rows) * f64::from(dims.width));
    rho.max(rho.recip())
}

/// Position id of cell `(row, col)` (both 1-based) in an `N × N` grid.
pub fn position_id(row: u32, col: u32, max_grid: u32) -> u32 {
    (row - 1) * max_grid + col
}

pub fn make_plan(dims: ImageDims, config: &PipelineConfig) -> PartitionPlan {
    let grid = select_grid(dims, config);
    let s = config.cell_size_px;
    let patches = (1..=grid.rows)
        .flat_map(|row| (1..=grid.cols).map(move |col| (row, col)))
        .map(|(row, col)| PatchBox {
            row,
            col,
            x0: (col - 1) * s,
            y0: (row - 1) * s,
            x1: col * s,
            y1: row * s,
            position_id: position_id(row, col, config.max_grid),
        })
        .collect();
    PartitionPlan {
        source: dims,
        grid,
        resized: ImageDims {
            width: grid.cols * s,
            height: grid.rows * s,
        },
        distortion: distortion_factor(dims, grid),
        patches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(h: u32, w: u32) -> ImageDims {
        ImageDims::new(w, h).unwrap()
    }

    fn cfg() -> PipelineConfig {
        PipelineConfig::default()
    }

    #[test]
    fn select_grid_examples() {
        assert_eq!(select_grid(dims(336, 336), &cfg()), GridSpec::new(1, 1));
        assert_eq!(select_grid(dims(500, 700), &cfg()), GridSpec::new(2, 3));
        assert_eq!(select_grid(dims(4500, 800), &cfg()), GridSpec::new(3, 3));
        assert_eq!(select_grid(dims(4500, 672), &cfg()), GridSpec::new(3, 2));
        assert_eq!(select_grid(dims(100, 100), &cfg()), GridSpec::new(1, 1));
        assert_eq!(select_grid(dims(1, 1), &cfg()), GridSpec::new(1, 1));
        assert_eq!(select_grid(dims(337, 336), &cfg()), GridSpec::new(2, 1));
    }

    #[test]
    fn make_plan_examples() {
        let p = make_plan(dims(672, 672), &cfg());
        assert_eq!(p.grid, GridSpec::new(2, 2));
        assert_eq!((p.resized.width, p.resized.height), (672, 672));
        let ids: Vec<u32> = p.patches.iter().map(|b| b.position_id).collect();
        assert_eq!(ids, [1, 2, 4, 5]);

        let p = make_plan(dims(336, 1008), &cfg());
        assert_eq!(p.grid, GridSpec::new(1, 3));
        assert_eq!((p.resized.width, p.resized.height), (1008, 336));
        let ids: Vec<u32> = p.patches.iter().map(|b| b.position_id).collect();
        assert_eq!(ids, [1, 2, 3]);

        let p = make_plan(dims(10000, 10000), &cfg());
        assert_eq!(p.grid, GridSpec::new(3, 3));
        assert_eq!((p.resized.width, p.resized.height), (1008, 1008));
        let ids: Vec<u32> = p.patches.iter().map(|b| b.position_id).collect();
        assert_eq!(ids, (1..=9).collect::<Vec<_>>());
        p.check().unwrap();
    }

    #[test]
    fn distortion_examples() {
        assert_eq!(distortion_factor(dims(336, 336), GridSpec::new(1, 1)), 1.0);
        assert_eq!(distortion_factor(dims(336, 672), GridSpec::new(1, 2)), 1.0);
        let d = distortion_factor(dims(336, 400), GridSpec::new(1, 2));
        assert!((d - 1.68).abs() < 1e-12, "{d}");
        // Same image squashed into one square cell.
        let square = distortion_factor(dims(336, 400), GridSpec::new(1, 1));
        assert!((square - 400.0 / 336.0).abs() < 1e-12);
        assert!(square < d);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(ImageDims::new(0, 5).is_err());
        assert!(ImageDims::new(5, 0).is_err());
    }

    #[test]
    fn json_field_order_is_stable() {
        let json = make_plan(dims(336, 336), &cfg()).to_json();
        assert_eq!(
            json,
            r#"{"source":{"w":336,"h":336},"grid":{"rows":1,"cols":1},"resized":{"w":336,"h":336},"distortion":1.0,"patches":[{"row":1,"col":1,"x0":0,"y0":0,"x1":336,"y1":336,"position_id":1}]}"#
        );
        let back = PartitionPlan::from_json(&json).unwrap();
        assert_eq!(back, make_plan(dims(336, 336), &cfg()));
    }

    #[test]
    fn check_rejects_inconsistent_plans() {
        let mut p = make_plan(dims(500, 700), &cfg());
        p.patches.swap(0, 1);
        assert!(p.check().is_err());
        let mut p = make_plan(dims(500, 700), &cfg());
        p.patches.pop();
        assert!(p.check().is_err());
    }
}
