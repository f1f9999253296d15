//! Pixel-level resizing and cropping.

use image::{imageops, ImageBuffer, Pixel};

use crate::config::{PipelineConfig, ResampleKernel};
use crate::error::{Error, Result};
use crate::partition::PartitionPlan;

pub type Buffer<P> = ImageBuffer<P, Vec<<P as Pixel>::Subpixel>>;

/// Stretches `image` to exactly `width × height`, ignoring aspect ratio.
/// Same-size requests return an exact copy.
pub fn resize_exact<P>(image: &Buffer<P>, width: u32, height: u32, kernel: ResampleKernel) -> Buffer<P>
where
    P: Pixel + 'static,
{
    if image.dimensions() == (width, height) {
        return image.clone();
    }
    imageops::resize(image, width, height, kernel.filter())
}

/// The whole image squeezed into a single cell, as seen by the global branch.
pub fn global_view<P>(image: &Buffer<P>, config: &PipelineConfig) -> Buffer<P>
where
    P: Pixel + 'static,
{
    let s = config.cell_size_px;
    resize_exact(image, s, s, config.resample)
}

/// Stretches `image` onto the plan's grid rectangle and crops every patch
/// box, in plan order.
pub fn extract_patches<P>(image: &Buffer<P>, plan: &PartitionPlan, kernel: ResampleKernel) -> Result<Vec<Buffer<P>>>
where
    P: Pixel + 'static,
{
    let (w, h) = image.dimensions();
    if (w, h) != (plan.source.width, plan.source.height) {
        return Err(Error::DimensionMismatch {
            expected_w: plan.source.width,
            expected_h: plan.source.height,
            actual_w: w,
            actual_h: h,
        });
    }
    plan.check()?;
    let resized = resize_exact(image, plan.resized.width, plan.resized.height, kernel);
    Ok(plan
        .patches
        .iter()
        .map(|b| imageops::crop_imm(&resized, b.x0, b.y0, b.width(), b.height()).to_image())
        .collect())
}
