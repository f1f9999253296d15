use image::Rgb32FImage;
use ndarray::{s, Array2, ArrayView2, Axis};

use super::params::{ProjectorParams, ToyEncoderParams};
use super::{FeatureSequence, Scalar, TokenRole};
use crate::config::{PipelineConfig, TokenGrouping};
use crate::error::{Error, Result};
use crate::partition::PartitionPlan;

/// Anything that maps one `S × S` cell to `tokens_per_cell` feature rows.
pub trait CellEncoder<T> {
    fn encode_cell(&self, patch: &Rgb32FImage, config: &PipelineConfig) -> Result<Array2<T>>;
}

/// Splits a cell into `p × p` sub-patches in row-major order and flattens
/// each one as `(y, x, channel)`. Returns `tokens_per_cell × 3p²`.
pub fn patchify<T: Scalar>(patch: &Rgb32FImage, config: &PipelineConfig) -> Result<Array2<T>> {
    let s = config.cell_size_px;
    if patch.dimensions() != (s, s) {
        let (w, h) = patch.dimensions();
        return Err(Error::Shape {
            what: "encoder input",
            expected: (s as usize, s as usize),
            actual: (h as usize, w as usize),
        });
    }
    let p = config.encoder_patch_px as usize;
    let side = config.tokens_per_side();
    let raw = patch.as_raw();
    let stride = s as usize * 3;
    let mut out = Array2::<T>::zeros((side * side, 3 * p * p));
    for (token, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let (ty, tx) = (token / side, token % side);
        let row = row.as_slice_mut().unwrap();
        for dy in 0..p {
            let start = (ty * p + dy) * stride + tx * p * 3;
            for (dst, src) in row[dy * p * 3..(dy + 1) * p * 3].iter_mut().zip(&raw[start..start + p * 3]) {
                *dst = T::from(*src).unwrap();
            }
        }
    }
    Ok(out)
}

impl<T: Scalar> ToyEncoderParams<T> {
    /// Encoder output for already patchified input.
    pub fn encode_patchified(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.ncols() != self.patch_embed.nrows() || x.nrows() != self.pos_embed.nrows() {
            return Err(Error::Shape {
                what: "patch embedding",
                expected: (self.pos_embed.nrows(), self.patch_embed.nrows()),
                actual: x.dim(),
            });
        }
        Ok(x.dot(&self.patch_embed) + &self.pos_embed)
    }
}

impl<T: Scalar> CellEncoder<T> for ToyEncoderParams<T> {
    fn encode_cell(&self, patch: &Rgb32FImage, config: &PipelineConfig) -> Result<Array2<T>> {
        let x = patchify(patch, config)?;
        self.encode_patchified(x.view())
    }
}

/// Row-wise affine map into the embedding space.
pub fn project<T: Scalar>(features: ArrayView2<'_, T>, params: &ProjectorParams<T>) -> Result<Array2<T>> {
    if features.ncols() != params.proj1.nrows() {
        return Err(Error::Shape {
            what: "projection input",
            expected: (features.nrows(), params.proj1.nrows()),
            actual: features.dim(),
        });
    }
    Ok(features.dot(&params.proj1) + &params.proj1_bias)
}

fn group_sources(rows: usize, grouping: TokenGrouping) -> Result<Vec<[usize; 4]>> {
    let not = || Err(Error::NotCompressible { rows, grouping });
    match grouping {
        TokenGrouping::Spatial2x2 => {
            let side = (rows as f64).sqrt().round() as usize;
            if rows == 0 || side * side != rows || !side.is_multiple_of(2) {
                return not();
            }
            let half = side / 2;
            Ok((0..half * half)
                .map(|k| {
                    let (by, bx) = (2 * (k / half), 2 * (k % half));
                    let at = |y: usize, x: usize| y * side + x;
                    [at(by, bx), at(by, bx + 1), at(by + 1, bx), at(by + 1, bx + 1)]
                })
                .collect())
        }
        TokenGrouping::Sequential4 => {
            if rows == 0 || !rows.is_multiple_of(4) {
                return not();
            }
            Ok((0..rows / 4).map(|k| [4 * k, 4 * k + 1, 4 * k + 2, 4 * k + 3]).collect())
        }
    }
}

/// Concatenates each group of four tokens into one `4·D` row.
pub fn merge_groups<T: Scalar>(features: ArrayView2<'_, T>, grouping: TokenGrouping) -> Result<Array2<T>> {
    let d = features.ncols();
    let groups = group_sources(features.nrows(), grouping)?;
    let mut out = Array2::<T>::zeros((groups.len(), 4 * d));
    for (k, src) in groups.iter().enumerate() {
        for (j, &r) in src.iter().enumerate() {
            out.slice_mut(s![k, j * d..(j + 1) * d]).assign(&features.row(r));
        }
    }
    Ok(out)
}

/// Adjoint of [`merge_groups`]: scatters `4·D` rows back onto their tokens.
pub(crate) fn split_groups<T: Scalar>(merged: ArrayView2<'_, T>, rows: usize, grouping: TokenGrouping) -> Result<Array2<T>> {
    let d = merged.ncols() / 4;
    let groups = group_sources(rows, grouping)?;
    let mut out = Array2::<T>::zeros((rows, d));
    for (k, src) in groups.iter().enumerate() {
        for (j, &r) in src.iter().enumerate() {
            out.row_mut(r).assign(&merged.slice(s![k, j * d..(j + 1) * d]));
        }
    }
    Ok(out)
}

/// Four-fold token reduction: merge groups of four tokens, then apply the
/// compressor's affine map.
pub fn compress<T: Scalar>(
    features: ArrayView2<'_, T>,
    params: &ProjectorParams<T>,
    grouping: TokenGrouping,
) -> Result<Array2<T>> {
    if 4 * features.ncols() != params.proj2.nrows() {
        return Err(Error::Shape {
            what: "compressor input",
            expected: (features.nrows(), params.proj2.nrows() / 4),
            actual: features.dim(),
        });
    }
    let merged = merge_groups(features, grouping)?;
    Ok(merged.dot(&params.proj2) + &params.proj2_bias)
}

/// Lays out `[pos₀, global…]` followed by `[pos_id, local…]` for each patch
/// in plan order.
pub fn assemble<T: Scalar>(
    global: ArrayView2<'_, T>,
    locals: &[Array2<T>],
    plan: &PartitionPlan,
    params: &ProjectorParams<T>,
) -> Result<FeatureSequence<T>> {
    if locals.len() != plan.patches.len() {
        return Err(Error::PatchCountMismatch {
            expected: plan.patches.len(),
            actual: locals.len(),
        });
    }
    let table = &params.position_table;
    let d = table.ncols();
    let check_width = |what, m: ArrayView2<'_, T>| {
        if m.ncols() != d {
            return Err(Error::Shape {
                what,
                expected: (m.nrows(), d),
                actual: m.dim(),
            });
        }
        Ok(())
    };
    check_width("global features", global)?;
    for l in locals {
        check_width("local features", l.view())?;
    }
    let total = 1 + global.nrows() + locals.iter().map(|l| 1 + l.nrows()).sum::<usize>();
    let mut tokens = Array2::<T>::zeros((total, d));
    let mut roles = Vec::with_capacity(total);
    let mut ids = Vec::with_capacity(total);

    let mut at = 0;
    let mut push_block = |id: u32, role: TokenRole, block: ArrayView2<'_, T>| -> Result<()> {
        let row = id as usize;
        if row >= table.nrows() {
            return Err(Error::PositionOutOfRange { id, rows: table.nrows() });
        }
        tokens.row_mut(at).assign(&table.row(row));
        tokens.slice_mut(s![at + 1..at + 1 + block.nrows(), ..]).assign(&block);
        roles.push(TokenRole::Position);
        roles.extend(std::iter::repeat_n(role, block.nrows()));
        ids.extend(std::iter::repeat_n(id, block.nrows() + 1));
        at += 1 + block.nrows();
        Ok(())
    };
    push_block(0, TokenRole::Global, global)?;
    for (b, l) in plan.patches.iter().zip(locals) {
        push_block(b.position_id, TokenRole::Local, l.view())?;
    }
    Ok(FeatureSequence {
        tokens,
        roles,
        source_position_id: ids,
    })
}
