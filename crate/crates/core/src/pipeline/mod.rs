//! Toy-scale visual-token pipeline.
//!
//! The global branch squeezes the whole image into one cell, encodes it and
//! projects it to the embedding width. The local branch encodes every plan
//! patch, projects it with the same layer and compresses it four-fold. A
//! position token is placed in front of each block before concatenation.

pub mod checkpoint;
pub mod grad;
mod ops;
mod params;

use image::Rgb32FImage;
use ndarray::Array2;
use num_traits::Float;
use rayon::prelude::*;
use serde::Serialize;

pub use ops::{assemble, compress, merge_groups, patchify, project, CellEncoder};
pub use params::{ModelParams, ParamGroup, ProjectorParams, ToyEncoderParams};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::imaging::{extract_patches, global_view};
use crate::partition::{make_plan, ImageDims, PartitionPlan};

/// Floating-point type the pipeline can run in.
pub trait Scalar: ndarray::LinalgScalar + Float + Send + Sync + std::fmt::Debug {}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenRole {
    Position,
    Global,
    Local,
}

/// Ordered visual prefix handed to the language model.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<T> {
    /// `len × D_t`
    pub tokens: Array2<T>,
    pub roles: Vec<TokenRole>,
    /// Position id of the block each token belongs to (0 = global).
    pub source_position_id: Vec<u32>,
}

/// Contiguous run of tokens sharing a role and position id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub role: TokenRole,
    pub position_id: u32,
    pub start: usize,
    pub len: usize,
}

impl<T> FeatureSequence<T> {
    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn segments(&self) -> Vec<Segment> {
        let mut out: Vec<Segment> = Vec::new();
        for (i, (&role, &id)) in self.roles.iter().zip(&self.source_position_id).enumerate() {
            match out.last_mut() {
                Some(s) if s.role == role && s.position_id == id => s.len += 1,
                _ => out.push(Segment {
                    role,
                    position_id: id,
                    start: i,
                    len: 1,
                }),
            }
        }
        out
    }
}

/// Parameter-independent part of a forward pass: the plan plus the pixel
/// inputs of every encoder call.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub plan: PartitionPlan,
    pub global_view: Rgb32FImage,
    pub patches: Vec<Rgb32FImage>,
}

/// Plans the image and resamples it into the global view and local patches.
/// The global view is the original image stretched to one cell.
pub fn prepare(image: &Rgb32FImage, config: &PipelineConfig) -> Result<PreparedInput> {
    config.validate()?;
    let (w, h) = image.dimensions();
    let plan = make_plan(ImageDims::new(w, h)?, config);
    let patches = extract_patches(image, &plan, config.resample)?;
    Ok(PreparedInput {
        global_view: global_view(image, config),
        patches,
        plan,
    })
}

/// Runs both branches on prepared input with any cell encoder. Patches are
/// encoded in parallel; the output order always follows the plan.
pub fn forward_with<T, E>(
    encoder: &E,
    projector: &ProjectorParams<T>,
    input: &PreparedInput,
    config: &PipelineConfig,
) -> Result<FeatureSequence<T>>
where
    T: Scalar,
    E: CellEncoder<T> + Sync,
{
    let global = project(encoder.encode_cell(&input.global_view, config)?.view(), projector)?;
    let locals = input
        .patches
        .par_iter()
        .map(|patch| {
            let encoded = encoder.encode_cell(patch, config)?;
            let projected = project(encoded.view(), projector)?;
            compress(projected.view(), projector, config.grouping)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(global.view(), &locals, &input.plan, projector)
}

pub fn forward_prepared<T: Scalar>(
    params: &ModelParams<T>,
    input: &PreparedInput,
    config: &PipelineConfig,
) -> Result<FeatureSequence<T>> {
    forward_with(&params.encoder, &params.projector, input, config)
}

/// Full image-to-sequence pass.
pub fn forward<T: Scalar>(
    image: &Rgb32FImage,
    params: &ModelParams<T>,
    config: &PipelineConfig,
) -> Result<FeatureSequence<T>> {
    params.validate(config)?;
    forward_prepared(params, &prepare(image, config)?, config)
}

#[cfg(test)]
mod tests {
    use image::Rgb;

    use super::*;
    use crate::budget::budget_for_plan;

    fn toy() -> PipelineConfig {
        PipelineConfig::default().with_dims(4, 8)
    }

    fn image(w: u32, h: u32) -> Rgb32FImage {
        Rgb32FImage::from_fn(w, h, |x, y| Rgb([(x % 17) as f32 / 17.0, (y % 11) as f32 / 11.0, 0.5]))
    }

    #[test]
    fn forward_lengths() {
        let c = toy();
        let p = ModelParams::<f32>::init(&c, 0).unwrap();
        for ((w, h), want) in [((700, 500), 1447), ((100, 100), 722)] {
            let seq = forward(&image(w, h), &p, &c).unwrap();
            assert_eq!(seq.len(), want);
            assert_eq!(seq.dim(), 8);
            assert_eq!(seq.tokens.nrows(), want);
            let plan = make_plan(ImageDims::new(w, h).unwrap(), &c);
            assert_eq!(seq.len(), budget_for_plan(&plan, &c).total);
        }
    }

    #[test]
    fn segments_follow_plan_order() {
        let c = toy();
        let p = ModelParams::<f32>::init(&c, 0).unwrap();
        let seq = forward(&image(700, 500), &p, &c).unwrap();
        let segs = seq.segments();
        let ids: Vec<u32> = segs.iter().filter(|s| s.role == TokenRole::Local).map(|s| s.position_id).collect();
        assert_eq!(ids, [1, 2, 3, 4, 5, 6]);
        assert_eq!(segs[1], Segment { role: TokenRole::Global, position_id: 0, start: 1, len: 576 });
    }

    #[test]
    fn single_and_double_precision_agree() {
        let c = toy();
        let p = ModelParams::<f64>::init(&c, 9).unwrap();
        let img = image(400, 300);
        let a = forward(&img, &p, &c).unwrap();
        let b = forward(&img, &p.cast::<f32>(), &c).unwrap();
        let max = a.tokens.iter().zip(b.tokens.iter()).map(|(x, y)| (x - f64::from(*y)).abs()).fold(0.0, f64::max);
        assert!(max < 1e-4, "{max}");
    }
}
