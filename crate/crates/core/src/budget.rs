//! Visual-token budgets and fixed-resolution baselines.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::partition::{distortion_factor, make_plan, GridSpec, ImageDims, PartitionPlan};

/// Token counts for one partitioned image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub global_tokens: usize,
    pub local_tokens_per_patch: usize,
    pub patch_count: usize,
    /// One position token in front of the global block and of each patch.
    pub position_tokens: usize,
    pub total: usize,
}

pub fn budget_for_plan(plan: &PartitionPlan, config: &PipelineConfig) -> TokenBudget {
    let global_tokens = config.tokens_per_cell();
    let local_tokens_per_patch = config.compressed_tokens_per_cell();
    let patch_count = plan.patch_count();
    TokenBudget {
        global_tokens,
        local_tokens_per_patch,
        patch_count,
        position_tokens: 1 + patch_count,
        total: (global_tokens + 1) + patch_count * (local_tokens_per_patch + 1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineStrategy {
    /// Whole image resized to one square cell.
    FixedSingleCell,
    /// Whole image resized to a fixed grid of square cells.
    FixedGrid,
}

/// A fixed-resolution preprocessing strategy to compare against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub name: String,
    pub strategy: BaselineStrategy,
    pub cell_px: u32,
    pub grid: GridSpec,
    pub tokens_per_cell: usize,
    /// Adds one extra cell's worth of tokens for a downsampled global view.
    pub global_view: bool,
}

impl BaselineSpec {
    /// One 336 px cell, 576 uncompressed tokens, no position tokens.
    pub fn llava() -> Self {
        Self {
            name: "llava".into(),
            strategy: BaselineStrategy::FixedSingleCell,
            cell_px: 336,
            grid: GridSpec::new(1, 1),
            tokens_per_cell: 576,
            global_view: false,
        }
    }

    /// Fixed 1344×896 input: three columns by two rows of 448 px windows plus
    /// a global view, each resampled to 256 tokens.
    pub fn monkey() -> Self {
        Self::monkey_with_tokens(256)
    }

    pub fn monkey_with_tokens(tokens_per_cell: usize) -> Self {
        Self {
            name: "monkey".into(),
            strategy: BaselineStrategy::FixedGrid,
            cell_px: 448,
            grid: GridSpec::new(2, 3),
            tokens_per_cell,
            global_view: true,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "llava" => Ok(Self::llava()),
            "monkey" => Ok(Self::monkey()),
            _ => Err(Error::UnknownBaseline(name.to_string())),
        }
    }

    /// Parses a comma-separated list such as `llava,monkey`. Empty input
    /// yields no baselines.
    pub fn parse_list(list: &str) -> Result<Vec<Self>> {
        list.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(Self::by_name)
            .collect()
    }

    pub fn grid(&self) -> GridSpec {
        match self.strategy {
            BaselineStrategy::FixedSingleCell => GridSpec::new(1, 1),
            BaselineStrategy::FixedGrid => self.grid,
        }
    }

    pub fn token_total(&self) -> usize {
        let cells = self.grid().cell_count() + usize::from(self.global_view);
        cells * self.tokens_per_cell
    }

    pub fn resized(&self) -> ImageDims {
        let g = self.grid();
        ImageDims {
            width: g.cols * self.cell_px,
            height: g.rows * self.cell_px,
        }
    }
}

/// One strategy applied to one image. Column order is the CSV layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub image: String,
    pub strategy: String,
    pub rows: u32,
    pub cols: u32,
    pub resized_w: u32,
    pub resized_h: u32,
    pub tokens: usize,
    pub distortion: f64,
}

pub const ADAPTIVE: &str = "adaptive";

/// The adaptive plan followed by each baseline, in the order given.
pub fn compare_budgets(
    image: &str,
    dims: ImageDims,
    baselines: &[BaselineSpec],
    config: &PipelineConfig,
) -> Vec<ComparisonRow> {
    let plan = make_plan(dims, config);
    let budget = budget_for_plan(&plan, config);
    let adaptive = ComparisonRow {
        image: image.to_string(),
        strategy: ADAPTIVE.to_string(),
        rows: plan.grid.rows,
        cols: plan.grid.cols,
        resized_w: plan.resized.width,
        resized_h: plan.resized.height,
        tokens: budget.total,
        distortion: plan.distortion,
    };
    std::iter::once(adaptive)
        .chain(baselines.iter().map(|b| {
            let grid = b.grid();
            let resized = b.resized();
            ComparisonRow {
                image: image.to_string(),
                strategy: b.name.clone(),
                rows: grid.rows,
                cols: grid.cols,
                resized_w: resized.width,
                resized_h: resized.height,
                tokens: b.token_total(),
                distortion: distortion_factor(dims, grid),
            }
        }))
        .collect()
}

pub fn write_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["image", "strategy", "rows", "cols", "resized_w", "resized_h", "tokens", "distortion"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ComparisonRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
