use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Scalar;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};

/// Linear patch embedding plus learned additive positional rows; a stand-in
/// for a frozen ViT that keeps its token-count contract.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderParams<T> {
    /// `(3·p²) × D_v`
    pub patch_embed: Array2<T>,
    /// `tokens_per_cell × D_v`
    pub pos_embed: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorParams<T> {
    /// `D_v × D_t`, shared by the global and local branches.
    pub proj1: Array2<T>,
    pub proj1_bias: Array1<T>,
    /// `4·D_t × D_t` token compressor.
    pub proj2: Array2<T>,
    pub proj2_bias: Array1<T>,
    /// `(N² + 1) × D_t`; row 0 tags the global view.
    pub position_table: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub encoder: ToyEncoderParams<T>,
    pub projector: ProjectorParams<T>,
}

/// Named parameter tensors, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    PatchEmbed,
    PosEmbed,
    Proj1,
    Proj1Bias,
    Proj2,
    Proj2Bias,
    PositionTable,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 7] = [
        ParamGroup::PatchEmbed,
        ParamGroup::PosEmbed,
        ParamGroup::Proj1,
        ParamGroup::Proj1Bias,
        ParamGroup::Proj2,
        ParamGroup::Proj2Bias,
        ParamGroup::PositionTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::PatchEmbed => "patch_embed",
            ParamGroup::PosEmbed => "pos_embed",
            ParamGroup::Proj1 => "proj1",
            ParamGroup::Proj1Bias => "proj1_bias",
            ParamGroup::Proj2 => "proj2",
            ParamGroup::Proj2Bias => "proj2_bias",
            ParamGroup::PositionTable => "position_table",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }

    /// Tensor shape under `config`; biases are one-dimensional.
    pub fn shape(self, config: &PipelineConfig) -> Vec<usize> {
        let (dv, dt) = (config.encoder_dim, config.embed_dim);
        match self {
            ParamGroup::PatchEmbed => vec![config.patch_features(), dv],
            ParamGroup::PosEmbed => vec![config.tokens_per_cell(), dv],
            ParamGroup::Proj1 => vec![dv, dt],
            ParamGroup::Proj1Bias => vec![dt],
            ParamGroup::Proj2 => vec![4 * dt, dt],
            ParamGroup::Proj2Bias => vec![dt],
            ParamGroup::PositionTable => vec![config.position_token_count(), dt],
        }
    }

    /// Input width used for the default initialisation bound `1/√fan_in`.
    fn fan_in(self, config: &PipelineConfig) -> usize {
        match self {
            ParamGroup::PatchEmbed => config.patch_features(),
            ParamGroup::PosEmbed => config.encoder_dim,
            ParamGroup::Proj1 | ParamGroup::Proj1Bias => config.encoder_dim,
            ParamGroup::Proj2 | ParamGroup::Proj2Bias => 4 * config.embed_dim,
            ParamGroup::PositionTable => config.embed_dim,
        }
    }
}

fn matrix<T: Scalar>(shape: &[usize], data: Vec<T>) -> Array2<T> {
    Array2::from_shape_vec((shape[0], shape[1]), data).expect("shape matches data")
}

impl<T: Scalar> ModelParams<T> {
    /// Uniform `[−1/√fan_in, 1/√fan_in]` initialisation, deterministic in `seed`.
    pub fn init(config: &PipelineConfig, seed: u64) -> Result<Self> {
        Self::sample(config, seed, |g| 1.0 / (g.fan_in(config) as f64).sqrt())
    }

    /// Every entry drawn from `U(−bound, bound)`.
    pub fn uniform(config: &PipelineConfig, seed: u64, bound: f64) -> Result<Self> {
        Self::sample(config, seed, |_| bound)
    }

    fn sample(config: &PipelineConfig, seed: u64, bound: impl Fn(ParamGroup) -> f64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = ParamGroup::ALL.map(|g| {
            let b = bound(g);
            let n: usize = g.shape(config).iter().product();
            (0..n).map(|_| T::from(rng.random_range(-b..=b)).unwrap()).collect::<Vec<T>>()
        });
        Self::from_flat(config, |g| std::mem::take(&mut tensors[g as usize]))
    }

    /// Builds parameters from one flat row-major vector per group.
    pub fn from_flat(config: &PipelineConfig, mut data: impl FnMut(ParamGroup) -> Vec<T>) -> Result<Self> {
        let mut take = |g: ParamGroup| {
            let v = data(g);
            let shape = g.shape(config);
            let n: usize = shape.iter().product();
            if v.len() != n {
                return Err(Error::Checkpoint(format!("{} has {} values, expected {n}", g.name(), v.len())));
            }
            Ok((shape, v))
        };
        let (s, v) = take(ParamGroup::PatchEmbed)?;
        let patch_embed = matrix(&s, v);
        let (s, v) = take(ParamGroup::PosEmbed)?;
        let pos_embed = matrix(&s, v);
        let (s, v) = take(ParamGroup::Proj1)?;
        let proj1 = matrix(&s, v);
        let (_, v) = take(ParamGroup::Proj1Bias)?;
        let proj1_bias = Array1::from(v);
        let (s, v) = take(ParamGroup::Proj2)?;
        let proj2 = matrix(&s, v);
        let (_, v) = take(ParamGroup::Proj2Bias)?;
        let proj2_bias = Array1::from(v);
        let (s, v) = take(ParamGroup::PositionTable)?;
        let position_table = matrix(&s, v);
        Ok(Self {
            encoder: ToyEncoderParams { patch_embed, pos_embed },
            projector: ProjectorParams {
                proj1,
                proj1_bias,
                proj2,
                proj2_bias,
                position_table,
            },
        })
    }

    /// All-zero parameters with the shapes of `config`.
    pub fn zeros(config: &PipelineConfig) -> Result<Self> {
        Self::from_flat(config, |g| vec![T::zero(); g.shape(config).iter().product()])
    }

    pub fn group(&self, g: ParamGroup) -> &[T] {
        let slice = match g {
            ParamGroup::PatchEmbed => self.encoder.patch_embed.as_slice(),
            ParamGroup::PosEmbed => self.encoder.pos_embed.as_slice(),
            ParamGroup::Proj1 => self.projector.proj1.as_slice(),
            ParamGroup::Proj1Bias => self.projector.proj1_bias.as_slice(),
            ParamGroup::Proj2 => self.projector.proj2.as_slice(),
            ParamGroup::Proj2Bias => self.projector.proj2_bias.as_slice(),
            ParamGroup::PositionTable => self.projector.position_table.as_slice(),
        };
        slice.expect("parameters are stored in standard layout")
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [T] {
        let slice = match g {
            ParamGroup::PatchEmbed => self.encoder.patch_embed.as_slice_mut(),
            ParamGroup::PosEmbed => self.encoder.pos_embed.as_slice_mut(),
            ParamGroup::Proj1 => self.projector.proj1.as_slice_mut(),
            ParamGroup::Proj1Bias => self.projector.proj1_bias.as_slice_mut(),
            ParamGroup::Proj2 => self.projector.proj2.as_slice_mut(),
            ParamGroup::Proj2Bias => self.projector.proj2_bias.as_slice_mut(),
            ParamGroup::PositionTable => self.projector.position_table.as_slice_mut(),
        };
        slice.expect("parameters are stored in standard layout")
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let c2 = |a: &Array2<T>| a.mapv(|x| U::from(x).unwrap());
        let c1 = |a: &Array1<T>| a.mapv(|x| U::from(x).unwrap());
        ModelParams {
            encoder: ToyEncoderParams {
                patch_embed: c2(&self.encoder.patch_embed),
                pos_embed: c2(&self.encoder.pos_embed),
            },
            projector: ProjectorParams {
                proj1: c2(&self.projector.proj1),
                proj1_bias: c1(&self.projector.proj1_bias),
                proj2: c2(&self.projector.proj2),
                proj2_bias: c1(&self.projector.proj2_bias),
                position_table: c2(&self.projector.position_table),
            },
        }
    }

    /// Checks every tensor shape against `config` and that all entries are
    /// finite.
    pub fn validate(&self, config: &PipelineConfig) -> Result<()> {
        let shapes = [
            (ParamGroup::PatchEmbed, self.encoder.patch_embed.shape()),
            (ParamGroup::PosEmbed, self.encoder.pos_embed.shape()),
            (ParamGroup::Proj1, self.projector.proj1.shape()),
            (ParamGroup::Proj1Bias, self.projector.proj1_bias.shape()),
            (ParamGroup::Proj2, self.projector.proj2.shape()),
            (ParamGroup::Proj2Bias, self.projector.proj2_bias.shape()),
            (ParamGroup::PositionTable, self.projector.position_table.shape()),
        ];
        for (g, actual) in shapes {
            let want = g.shape(config);
            if actual != want.as_slice() {
                return Err(Error::Checkpoint(format!("{} has shape {actual:?}, expected {want:?}", g.name())));
            }
            if !self.group(g).iter().all(|x| x.is_finite()) {
                return Err(Error::Checkpoint(format!("{} has non-finite entries", g.name())));
            }
        }
        Ok(())
    }
}
