//! Reverse-mode gradients of the toy pipeline and their finite-difference
//! check.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ops::{merge_groups, patchify, split_groups};
use super::{forward_prepared, FeatureSequence, ModelParams, ParamGroup, PreparedInput};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};

/// Scalar objective over an assembled sequence.
pub trait Loss: Sync {
    fn value(&self, seq: &FeatureSequence<f64>) -> f64;
    /// `∂loss/∂tokens`, same shape as `seq.tokens`.
    fn gradient(&self, seq: &FeatureSequence<f64>) -> Array2<f64>;
}

/// Sum of every entry.
pub struct SumLoss;

impl Loss for SumLoss {
    fn value(&self, seq: &FeatureSequence<f64>) -> f64 {
        seq.tokens.sum()
    }

    fn gradient(&self, seq: &FeatureSequence<f64>) -> Array2<f64> {
        Array2::ones(seq.tokens.raw_dim())
    }
}

/// `½‖tokens‖²`.
pub struct SquaredNormLoss;

impl Loss for SquaredNormLoss {
    fn value(&self, seq: &FeatureSequence<f64>) -> f64 {
        0.5 * seq.tokens.iter().map(|x| x * x).sum::<f64>()
    }

    fn gradient(&self, seq: &FeatureSequence<f64>) -> Array2<f64> {
        seq.tokens.clone()
    }
}

pub struct ZeroLoss;

impl Loss for ZeroLoss {
    fn value(&self, _: &FeatureSequence<f64>) -> f64 {
        0.0
    }

    fn gradient(&self, seq: &FeatureSequence<f64>) -> Array2<f64> {
        Array2::zeros(seq.tokens.raw_dim())
    }
}

fn add_matmul_tn(acc: &mut Array2<f64>, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) {
    ndarray::linalg::general_mat_mul(1.0, &a.t(), &b, 1.0, acc);
}

/// Gradients of `Σ upstream ⊙ forward(params)` with respect to every
/// parameter, returned in the same layout as the parameters.
pub fn backward(
    params: &ModelParams<f64>,
    input: &PreparedInput,
    config: &PipelineConfig,
    upstream: ArrayView2<'_, f64>,
) -> Result<ModelParams<f64>> {
    let n_tok = config.tokens_per_cell();
    let n_c = config.compressed_tokens_per_cell();
    let expected = (1 + n_tok + input.patches.len() * (1 + n_c), config.embed_dim);
    if upstream.dim() != expected {
        return Err(Error::Shape {
            what: "upstream gradient",
            expected,
            actual: upstream.dim(),
        });
    }
    let enc = &params.encoder;
    let proj = &params.projector;
    let mut g = ModelParams::<f64>::zeros(config)?;

    // Shared tail of both branches: from ∂/∂(projected tokens) down to the
    // encoder parameters.
    let through_projection = |g: &mut ModelParams<f64>, x: &Array2<f64>, f: &Array2<f64>, d_t: ArrayView2<'_, f64>| {
        add_matmul_tn(&mut g.projector.proj1, f.view(), d_t);
        g.projector.proj1_bias += &d_t.sum_axis(Axis(0));
        let d_f = d_t.dot(&proj.proj1.t());
        add_matmul_tn(&mut g.encoder.patch_embed, x.view(), d_f.view());
        g.encoder.pos_embed += &d_f;
    };

    g.projector.position_table.row_mut(0).assign(&upstream.row(0));
    let x = patchify::<f64>(&input.global_view, config)?;
    let f = enc.encode_patchified(x.view())?;
    through_projection(&mut g, &x, &f, upstream.slice(s![1..1 + n_tok, ..]));

    let mut at = 1 + n_tok;
    for (patch, pbox) in input.patches.iter().zip(&input.plan.patches) {
        let id = pbox.position_id as usize;
        let mut row = g.projector.position_table.row_mut(id);
        row += &upstream.row(at);
        let d_c = upstream.slice(s![at + 1..at + 1 + n_c, ..]);

        let x = patchify::<f64>(patch, config)?;
        let f = enc.encode_patchified(x.view())?;
        let t = f.dot(&proj.proj1) + &proj.proj1_bias;
        let m = merge_groups(t.view(), config.grouping)?;
        add_matmul_tn(&mut g.projector.proj2, m.view(), d_c);
        g.projector.proj2_bias += &d_c.sum_axis(Axis(0));
        let d_m = d_c.dot(&proj.proj2.t());
        let d_t = split_groups(d_m.view(), n_tok, config.grouping)?;
        through_projection(&mut g, &x, &f, d_t.view());
        at += 1 + n_c;
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Coordinates checked per parameter group; small groups are checked
    /// exhaustively.
    pub samples_per_group: usize,
    pub seed: u64,
    pub groups: Vec<ParamGroup>,
    /// Negative control: perturbs the analytic gradient so the check must fail.
    pub corrupt_analytic: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            samples_per_group: 16,
            seed: 0,
            groups: ParamGroup::ALL.to_vec(),
            corrupt_analytic: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupCheck {
    pub group: &'static str,
    pub checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    pub max_rel_err: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn loss_at(loss: &dyn Loss, params: &ModelParams<f64>, input: &PreparedInput, config: &PipelineConfig) -> Result<f64> {
    let v = loss.value(&forward_prepared(params, input, config)?);
    if !v.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok(v)
}

/// Central difference `(L(θ+ε) − L(θ−ε)) / 2ε` for one coordinate.
pub fn numeric_gradient(
    loss: &dyn Loss,
    params: &mut ModelParams<f64>,
    input: &PreparedInput,
    config: &PipelineConfig,
    group: ParamGroup,
    index: usize,
    epsilon: f64,
) -> Result<f64> {
    let orig = params.group(group)[index];
    params.group_mut(group)[index] = orig + epsilon;
    let plus = loss_at(loss, params, input, config);
    params.group_mut(group)[index] = orig - epsilon;
    let minus = loss_at(loss, params, input, config);
    params.group_mut(group)[index] = orig;
    Ok((plus? - minus?) / (2.0 * epsilon))
}

/// Compares backpropagated gradients to central differences on a sample of
/// coordinates from each requested group.
pub fn grad_check(
    loss: &dyn Loss,
    params: &ModelParams<f64>,
    input: &PreparedInput,
    config: &PipelineConfig,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(opts.epsilon > 0.0 && opts.epsilon <= 1e-2) {
        return Err(Error::InvalidEpsilon(opts.epsilon));
    }
    params.validate(config)?;
    let seq = forward_prepared(params, input, config)?;
    if !loss.value(&seq).is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let analytic = backward(params, input, config, loss.gradient(&seq).view())?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = params.clone();
    let mut groups = Vec::with_capacity(opts.groups.len());
    for &group in &opts.groups {
        let len = params.group(group).len();
        let mut indices = sample(&mut rng, len, opts.samples_per_group.min(len)).into_vec();
        indices.sort_unstable();
        let mut max_rel_err: f64 = 0.0;
        for &i in &indices {
            let mut a = analytic.group(group)[i];
            if opts.corrupt_analytic {
                a += 1e-2 * (1.0 + a.abs());
            }
            let n = numeric_gradient(loss, &mut work, input, config, group, i, opts.epsilon)?;
            max_rel_err = max_rel_err.max(relative_error(a, n));
        }
        groups.push(GroupCheck {
            group: group.name(),
            checked: indices.len(),
            max_rel_err,
        });
    }
    let max_rel_err = groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport { groups, max_rel_err })
}
