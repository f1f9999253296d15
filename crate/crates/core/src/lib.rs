//! Adaptive grid partitioning for vision-language model inputs.
//!
//! An input image is fitted to the smallest rectangle of `cell × cell` grid
//! cells (at most `N × N`) that encloses it, stretched to that rectangle and
//! cut into encoder-sized patches. Each patch is tagged with a position token
//! that identifies its cell. The crate computes those plans, the visual-token
//! budget they imply, fixed-resolution baseline comparisons, corpus reports,
//! and a small differentiable encoder → projector → compressor pipeline whose
//! gradients can be checked against finite differences.

pub mod budget;
pub mod config;
pub mod corpus;
pub mod error;
pub mod imaging;
pub mod partition;
pub mod pipeline;

pub use budget::{budget_for_plan, compare_budgets, BaselineSpec, BaselineStrategy, ComparisonRow, TokenBudget};
pub use config::{PipelineConfig, ResampleKernel, TokenGrouping};
pub use corpus::{ingest, run_report, Corpus, CorpusImage, CorpusReport, ImageRecord};
pub use error::{Error, Result};
pub use partition::{distortion_factor, make_plan, select_grid, GridSpec, ImageDims, PartitionPlan, PatchBox};
