//! The conditioned VAE: `[m + s → h → d → h → m]`.
//!
//! The encoder sees the L2-normalized, dropped-out rating vector with the
//! raw one-hot condition appended; the decoder never sees the condition.
//! Training minimizes `nll + β·KL` where the negative log-likelihood only
//! counts rated items that satisfy the condition, while the softmax still
//! normalizes over the whole catalogue. With `s = 0` (or an unconditioned
//! example) every rated item counts and the loss is the multinomial VAE's.

mod backward;
mod forward;
mod loss;

use alloc::vec::Vec;

use crate::data::ConditionVector;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ops::{bias_init, xavier_uniform};
use crate::rng::RngStream;

pub use backward::{accumulate_backward, backward};
pub use forward::{
    build_input, decode, encode, encode_mean, forward_loss, predict_scores, sample_z, EncoderInput, ForwardCache,
    GaussianLatent, Noise,
};
pub use loss::{condition_mask, conditioned_nll, kl_divergence, LossBreakdown};

/// Layer sizes. `s = 0` gives the unconditioned multinomial VAE.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub items: usize,
    pub categories: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl ModelDims {
    pub const DEFAULT_HIDDEN: usize = 600;
    pub const DEFAULT_LATENT: usize = 200;

    pub fn new(items: usize, categories: usize) -> Self {
        Self {
            items,
            categories,
            hidden: Self::DEFAULT_HIDDEN,
            latent: Self::DEFAULT_LATENT,
        }
    }

    pub fn input(&self) -> usize {
        self.items + self.categories
    }

    /// Shapes of the parameter tensors in [`TENSOR_NAMES`] order.
    pub fn shapes(&self) -> [(usize, usize); 10] {
        let (m, h, d) = (self.items, self.hidden, self.latent);
        [
            (self.input(), h),
            (1, h),
            (h, d),
            (1, d),
            (h, d),
            (1, d),
            (d, h),
            (1, h),
            (h, m),
            (1, m),
        ]
    }
}

/// Where normalization sits relative to dropout on the rating block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InputOrder {
    #[default]
    NormalizeThenDropout,
    DropoutThenNormalize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub dims: ModelDims,
    pub dropout: f64,
    pub input_order: InputOrder,
}

impl ModelConfig {
    pub fn new(dims: ModelDims) -> Self {
        Self {
            dims,
            dropout: 0.5,
            input_order: InputOrder::default(),
        }
    }
}

/// A configured network with its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self> {
        if params.dims != config.dims {
            return Err(Error::InvalidConfig(alloc::format!(
                "parameter dims {:?} do not match model dims {:?}",
                params.dims,
                config.dims
            )));
        }
        Ok(Self { config, params })
    }

    pub fn dims(&self) -> ModelDims {
        self.config.dims
    }

    /// Whether the encoder takes a condition block at all.
    pub fn is_conditioned(&self) -> bool {
        self.config.dims.categories > 0
    }

    /// An unconditioned (`s = 0`) model ignores whatever condition it is given.
    fn effective_condition(&self, c: &ConditionVector) -> ConditionVector {
        if self.is_conditioned() {
            *c
        } else {
            ConditionVector::unconditioned(0)
        }
    }

    pub fn predict_scores(&self, items: &[u32], c: &ConditionVector) -> Result<Vec<f64>> {
        predict_scores(items, &self.effective_condition(c), &self.config, &self.params)
    }

    pub fn encode_mean(&self, items: &[u32], c: &ConditionVector) -> Result<Vec<f64>> {
        encode_mean(items, &self.effective_condition(c), &self.config, &self.params)
    }
}

/// Parameter tensor names, in checkpoint and flattening order.
pub const TENSOR_NAMES: [&str; 10] = [
    "enc_w1",
    "enc_b1",
    "enc_w_mu",
    "enc_b_mu",
    "enc_w_logvar",
    "enc_b_logvar",
    "dec_w1",
    "dec_b1",
    "dec_w2",
    "dec_b2",
];

/// Weights are stored input-major so a layer is `x · w + b`; biases are
/// `1 × n` row vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub enc_w1: Matrix,
    pub enc_b1: Matrix,
    pub enc_w_mu: Matrix,
    pub enc_b_mu: Matrix,
    pub enc_w_logvar: Matrix,
    pub enc_b_logvar: Matrix,
    pub dec_w1: Matrix,
    pub dec_b1: Matrix,
    pub dec_w2: Matrix,
    pub dec_b2: Matrix,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let s = dims.shapes();
        let z = |i: usize| Matrix::zeros(s[i].0, s[i].1);
        Self {
            dims,
            enc_w1: z(0),
            enc_b1: z(1),
            enc_w_mu: z(2),
            enc_b_mu: z(3),
            enc_w_logvar: z(4),
            enc_b_logvar: z(5),
            dec_w1: z(6),
            dec_b1: z(7),
            dec_w2: z(8),
            dec_b2: z(9),
        }
    }

    /// Xavier-uniform weights and `N(0, 0.001²)` biases, drawn tensor by
    /// tensor in [`TENSOR_NAMES`] order.
    pub fn init(dims: ModelDims, rng: &mut RngStream) -> Self {
        let s = dims.shapes();
        let mut next = |i: usize| {
            if s[i].0 == 1 {
                bias_init(s[i].1, rng)
            } else {
                xavier_uniform(s[i].0, s[i].1, rng)
            }
        };
        Self {
            dims,
            enc_w1: next(0),
            enc_b1: next(1),
            enc_w_mu: next(2),
            enc_b_mu: next(3),
            enc_w_logvar: next(4),
            enc_b_logvar: next(5),
            dec_w1: next(6),
            dec_b1: next(7),
            dec_w2: next(8),
            dec_b2: next(9),
        }
    }

    /// Assembles parameters from tensors in [`TENSOR_NAMES`] order,
    /// checking every shape against `dims`.
    pub fn from_tensors(dims: ModelDims, tensors: Vec<Matrix>) -> Result<Self> {
        let shapes = dims.shapes();
        if tensors.len() != shapes.len() {
            return Err(Error::InvalidConfig(alloc::format!(
                "expected {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for (t, &shape) in tensors.iter().zip(&shapes) {
            if t.shape() != shape {
                return Err(Error::DimensionMismatch {
                    op: "from_tensors",
                    left: shape,
                    right: t.shape(),
                });
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        Ok(Self {
            dims,
            enc_w1: next(),
            enc_b1: next(),
            enc_w_mu: next(),
            enc_b_mu: next(),
            enc_w_logvar: next(),
            enc_b_logvar: next(),
            dec_w1: next(),
            dec_b1: next(),
            dec_w2: next(),
            dec_b2: next(),
        })
    }

    pub fn tensors(&self) -> [&Matrix; 10] {
        [
            &self.enc_w1,
            &self.enc_b1,
            &self.enc_w_mu,
            &self.enc_b_mu,
            &self.enc_w_logvar,
            &self.enc_b_logvar,
            &self.dec_w1,
            &self.dec_b1,
            &self.dec_w2,
            &self.dec_b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 10] {
        [
            &mut self.enc_w1,
            &mut self.enc_b1,
            &mut self.enc_w_mu,
            &mut self.enc_b_mu,
            &mut self.enc_w_logvar,
            &mut self.enc_b_logvar,
            &mut self.dec_w1,
            &mut self.dec_b1,
            &mut self.dec_w2,
            &mut self.dec_b2,
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_parameters());
        for t in self.tensors() {
            out.extend_from_slice(t.as_slice());
        }
        out
    }

    pub fn unflatten(dims: ModelDims, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(dims);
        if flat.len() != p.num_parameters() {
            return Err(Error::DimensionMismatch {
                op: "unflatten",
                left: (p.num_parameters(), 1),
                right: (flat.len(), 1),
            });
        }
        let mut offset = 0;
        for t in p.tensors_mut() {
            let n = t.len();
            t.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(p)
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(b, scale).expect("same dims");
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }
}
