//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! The page lets a user pick an image size (or drop in a picture), then shows
//! the grid the image is fitted to, the stretched result with its patch
//! boxes, and the token cost against fixed-resolution baselines.

use gridtok::budget::{budget_for_plan, compare_budgets, BaselineSpec, ComparisonRow, TokenBudget};
use gridtok::imaging::resize_exact;
use gridtok::{make_plan, ImageDims, PartitionPlan, PipelineConfig};
use image::RgbaImage;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn config(max_grid: u32, cell: u32) -> Result<PipelineConfig, String> {
    let config = PipelineConfig {
        max_grid,
        cell_size_px: cell,
        ..PipelineConfig::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn plan_for(width: u32, height: u32, max_grid: u32, cell: u32) -> Result<(PartitionPlan, PipelineConfig), String> {
    let config = config(max_grid, cell)?;
    let dims = ImageDims::new(width, height).map_err(|e| e.to_string())?;
    Ok((make_plan(dims, &config), config))
}

pub fn plan_json(width: u32, height: u32, max_grid: u32, cell: u32) -> Result<String, String> {
    let (plan, _) = plan_for(width, height, max_grid, cell)?;
    Ok(plan.to_json())
}

#[derive(Serialize)]
struct Comparison {
    budget: TokenBudget,
    rows: Vec<ComparisonRow>,
}

pub fn compare_json(width: u32, height: u32, max_grid: u32, cell: u32) -> Result<String, String> {
    let (plan, config) = plan_for(width, height, max_grid, cell)?;
    let baselines = [BaselineSpec::llava(), BaselineSpec::monkey()];
    let out = Comparison {
        budget: budget_for_plan(&plan, &config),
        rows: compare_budgets("input", plan.source, &baselines, &config),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Stretches RGBA pixels onto the plan's grid rectangle with the bilinear
/// kernel. Returns `resized_w · resized_h · 4` bytes.
pub fn resize_rgba(rgba: &[u8], width: u32, height: u32, max_grid: u32, cell: u32) -> Result<Vec<u8>, String> {
    let (plan, config) = plan_for(width, height, max_grid, cell)?;
    let img = RgbaImage::from_raw(width, height, rgba.to_vec())
        .ok_or_else(|| format!("expected {} bytes, got {}", width as usize * height as usize * 4, rgba.len()))?;
    Ok(resize_exact(&img, plan.resized.width, plan.resized.height, config.resample).into_raw())
}

/// Partition plan as JSON.
#[wasm_bindgen]
pub fn plan(width: u32, height: u32, max_grid: u32, cell: u32) -> Result<String, JsValue> {
    plan_json(width, height, max_grid, cell).map_err(|e| JsValue::from_str(&e))
}

/// Token budget plus adaptive/llava/monkey comparison rows as JSON.
#[wasm_bindgen]
pub fn compare(width: u32, height: u32, max_grid: u32, cell: u32) -> Result<String, JsValue> {
    compare_json(width, height, max_grid, cell).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = resizeToGrid)]
pub fn resize_to_grid(rgba: &[u8], width: u32, height: u32, max_grid: u32, cell: u32) -> Result<Vec<u8>, JsValue> {
    resize_rgba(rgba, width, height, max_grid, cell).map_err(|e| JsValue::from_str(&e))
}
