//! Hyperparameters shared by partitioning, budgeting and the toy pipeline.

use image::imageops::FilterType;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resampling kernel used when stretching an image onto its grid rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleKernel {
    Nearest,
    /// Triangle filter: plain bilinear when upscaling, area-weighted when
    /// downscaling.
    Bilinear,
    CatmullRom,
}

impl ResampleKernel {
    pub(crate) fn filter(self) -> FilterType {
        match self {
            ResampleKernel::Nearest => FilterType::Nearest,
            ResampleKernel::Bilinear => FilterType::Triangle,
            ResampleKernel::CatmullRom => FilterType::CatmullRom,
        }
    }
}

/// How the compressor gathers four encoder tokens into one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenGrouping {
    /// Each 2×2 neighbourhood of the square token grid, read top-left,
    /// top-right, bottom-left, bottom-right.
    Spatial2x2,
    /// Consecutive rows `4k..4k+3` of the flattened token sequence.
    Sequential4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Side of one grid cell in pixels, equal to the encoder input size.
    pub cell_size_px: u32,
    /// The grid is at most `max_grid × max_grid` cells.
    pub max_grid: u32,
    /// Side of one encoder sub-patch in pixels.
    pub encoder_patch_px: u32,
    pub encoder_dim: usize,
    pub embed_dim: usize,
    pub compression_factor: u32,
    pub resample: ResampleKernel,
    pub grouping: TokenGrouping,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cell_size_px: 336,
            max_grid: 3,
            encoder_patch_px: 14,
            encoder_dim: 32,
            embed_dim: 64,
            compression_factor: 4,
            resample: ResampleKernel::Bilinear,
            grouping: TokenGrouping::Spatial2x2,
        }
    }
}

impl PipelineConfig {
    /// CLIP-ViT-L/14-336 feature width into a 7B-class LLM embedding.
    pub fn full_scale() -> Self {
        Self {
            encoder_dim: 1024,
            embed_dim: 4096,
            ..Self::default()
        }
    }

    pub fn with_max_grid(mut self, max_grid: u32) -> Self {
        self.max_grid = max_grid;
        self
    }

    pub fn with_dims(mut self, encoder_dim: usize, embed_dim: usize) -> Self {
        self.encoder_dim = encoder_dim;
        self.embed_dim = embed_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.cell_size_px == 0 || self.max_grid == 0 || self.encoder_patch_px == 0 {
            return fail("cell size, max grid and encoder patch size must be positive".into());
        }
        if self.encoder_dim == 0 || self.embed_dim == 0 {
            return fail("encoder and embedding dimensions must be positive".into());
        }
        if !self.cell_size_px.is_multiple_of(self.encoder_patch_px) {
            return fail(format!(
                "cell size {} is not a multiple of the encoder patch size {}",
                self.cell_size_px, self.encoder_patch_px
            ));
        }
        if !self.tokens_per_side().is_multiple_of(2) {
            return fail(format!(
                "{} tokens per side cannot be merged in 2x2 blocks",
                self.tokens_per_side()
            ));
        }
        if self.compression_factor != 4 {
            return fail(format!(
                "compression factor must be 4, got {}",
                self.compression_factor
            ));
        }
        Ok(())
    }

    pub fn tokens_per_side(&self) -> usize {
        (self.cell_size_px / self.encoder_patch_px) as usize
    }

    /// Encoder tokens for one cell (576 at 336 px / 14 px).
    pub fn tokens_per_cell(&self) -> usize {
        self.tokens_per_side() * self.tokens_per_side()
    }

    /// Tokens left per local patch after compression (144 by default).
    pub fn compressed_tokens_per_cell(&self) -> usize {
        self.tokens_per_cell() / self.compression_factor as usize
    }

    /// One learnable position token for the global view plus one per cell.
    pub fn position_token_count(&self) -> usize {
        (self.max_grid * self.max_grid) as usize + 1
    }

    /// Flattened sub-patch width fed to the patch embedding.
    pub fn patch_features(&self) -> usize {
        (self.encoder_patch_px * self.encoder_patch_px * 3) as usize
    }

    /// Largest side a resized image can have.
    pub fn max_resolution_px(&self) -> u32 {
        self.max_grid * self.cell_size_px
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_shapes() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(c.tokens_per_cell(), 576);
        assert_eq!(c.compressed_tokens_per_cell(), 144);
        assert_eq!(c.position_token_count(), 10);
        assert_eq!(c.max_resolution_px(), 1008);
        assert_eq!(c.patch_features(), 588);
        PipelineConfig::full_scale().validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let base = PipelineConfig::default();
        for bad in [
            PipelineConfig { cell_size_px: 340, ..base.clone() },
            PipelineConfig { cell_size_px: 14 * 3, ..base.clone() },
            PipelineConfig { max_grid: 0, ..base.clone() },
            PipelineConfig { compression_factor: 2, ..base.clone() },
            PipelineConfig { embed_dim: 0, ..base.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
