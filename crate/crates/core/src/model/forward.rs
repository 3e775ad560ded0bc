use alloc::vec;
use alloc::vec::Vec;

use super::loss::{condition_mask, conditioned_nll, kl_divergence, LossBreakdown};
use super::{InputOrder, ModelConfig, ModelParams};
use crate::data::{ConditionVector, ItemConditionMatrix};
use crate::error::{Error, Result};
use crate::matrix::{affine, sparse_affine};
use crate::ops::{dropout_forward, log_softmax, tanh_forward};
use crate::rng::RngStream;

/// Source of the two kinds of randomness in a forward pass.
pub enum Noise<'a> {
    /// Inference: no dropout and `z = mu`.
    Inference,
    /// Training: dropout mask, then `eps`, drawn from the stream.
    Sampled(&'a mut RngStream),
    /// No dropout and a caller-supplied `eps` (finite-difference checks).
    Fixed(&'a [f64]),
}

impl Noise<'_> {
    fn dropout_stream(&mut self) -> Option<&mut RngStream> {
        match self {
            Noise::Sampled(rng) => Some(rng),
            _ => None,
        }
    }
}

/// The `(m + s)`-dimensional encoder input, stored sparsely: rating
/// entries at `0..m`, the active condition (if any) at `m + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderInput {
    pub entries: Vec<(usize, f64)>,
    pub dim: usize,
}

impl EncoderInput {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            x[i] = v;
        }
        x
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianLatent {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub eps: Vec<f64>,
    pub z: Vec<f64>,
}

/// Everything [`super::backward`] needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub input: EncoderInput,
    pub hidden_enc: Vec<f64>,
    pub latent: GaussianLatent,
    pub hidden_dec: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub mask: Vec<f64>,
    pub targets: Vec<u32>,
    pub beta: f64,
}

/// Normalizes the rating block, applies dropout to it (training only) and
/// appends the untouched one-hot condition.
pub fn build_input(items: &[u32], c: &ConditionVector, config: &ModelConfig, noise: &mut Noise) -> EncoderInput {
    let m = config.dims.items;
    debug_assert_eq!(c.dim(), config.dims.categories);
    let ones = vec![1.0; items.len()];
    let normalize = |v: &[f64]| -> Vec<f64> {
        let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if n == 0.0 {
            v.to_vec()
        } else {
            v.iter().map(|x| x / n).collect()
        }
    };
    let p = config.dropout;
    let values = match (config.input_order, noise.dropout_stream()) {
        (InputOrder::NormalizeThenDropout, Some(rng)) => dropout_forward(&normalize(&ones), p, rng, true).0,
        (InputOrder::DropoutThenNormalize, Some(rng)) => normalize(&dropout_forward(&ones, p, rng, true).0),
        (_, None) => normalize(&ones),
    };
    let mut entries: Vec<(usize, f64)> = items
        .iter()
        .zip(values)
        .filter(|(_, v)| *v != 0.0)
        .map(|(&i, v)| (i as usize, v))
        .collect();
    if let Some(j) = c.active() {
        entries.push((m + j, 1.0));
    }
    EncoderInput {
        entries,
        dim: config.dims.input(),
    }
}

/// Deterministic encoder: returns the tanh hidden layer and the latent with
/// `z = mu`, `eps = 0`.
pub fn encode(x: &EncoderInput, params: &ModelParams) -> (Vec<f64>, GaussianLatent) {
    let hidden = tanh_forward(&sparse_affine(&x.entries, &params.enc_w1, &params.enc_b1));
    let mu = affine(&hidden, &params.enc_w_mu, &params.enc_b_mu);
    let logvar = affine(&hidden, &params.enc_w_logvar, &params.enc_b_logvar);
    let d = mu.len();
    let latent = GaussianLatent {
        z: mu.clone(),
        mu,
        logvar,
        eps: vec![0.0; d],
    };
    (hidden, latent)
}

/// `z = mu + eps ⊙ exp(logvar / 2)`; inference keeps `z = mu`.
pub fn sample_z(latent: &mut GaussianLatent, noise: &mut Noise) {
    match noise {
        Noise::Inference => {
            latent.eps.iter_mut().for_each(|e| *e = 0.0);
            latent.z.clone_from(&latent.mu);
            return;
        }
        Noise::Sampled(rng) => {
            for e in latent.eps.iter_mut() {
                *e = rng.standard_normal();
            }
        }
        Noise::Fixed(eps) => latent.eps.copy_from_slice(eps),
    }
    for k in 0..latent.mu.len() {
        latent.z[k] = latent.mu[k] + latent.eps[k] * libm::exp(0.5 * latent.logvar[k]);
    }
}

/// Returns the decoder hidden layer and the item logits.
pub fn decode(z: &[f64], params: &ModelParams) -> (Vec<f64>, Vec<f64>) {
    let hidden = tanh_forward(&affine(z, &params.dec_w1, &params.dec_b1));
    let logits = affine(&hidden, &params.dec_w2, &params.dec_b2);
    (hidden, logits)
}

fn check_condition(c: &ConditionVector, config: &ModelConfig) -> Result<()> {
    if c.dim() != config.dims.categories {
        return Err(Error::DimensionMismatch {
            op: "condition",
            left: (config.dims.categories, 1),
            right: (c.dim(), 1),
        });
    }
    Ok(())
}

/// Full forward pass for one example: `total = nll + beta · KL`.
#[allow(clippy::too_many_arguments)]
pub fn forward_loss(
    items: &[u32],
    c: &ConditionVector,
    g: Option<&ItemConditionMatrix>,
    config: &ModelConfig,
    params: &ModelParams,
    beta: f64,
    noise: &mut Noise,
) -> Result<(LossBreakdown, ForwardCache)> {
    check_condition(c, config)?;
    let input = build_input(items, c, config, noise);
    let (hidden_enc, mut latent) = encode(&input, params);
    sample_z(&mut latent, noise);
    let (hidden_dec, logits) = decode(&latent.z, params);
    let log_probs = log_softmax(&logits);
    let mask = condition_mask(c, g, config.dims.items)?;
    let neg_ll = conditioned_nll(&log_probs, items, &mask)?;
    let kl = kl_divergence(&latent);
    let loss = LossBreakdown::new(neg_ll, kl, beta);
    if !loss.total.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok((
        loss,
        ForwardCache {
            input,
            hidden_enc,
            latent,
            hidden_dec,
            log_probs,
            mask,
            targets: items.to_vec(),
            beta,
        },
    ))
}

/// Inference-mode item scores (raw logits) for a history and a condition.
pub fn predict_scores(items: &[u32], c: &ConditionVector, config: &ModelConfig, params: &ModelParams) -> Result<Vec<f64>> {
    check_condition(c, config)?;
    let input = build_input(items, c, config, &mut Noise::Inference);
    let (_, latent) = encode(&input, params);
    Ok(decode(&latent.mu, params).1)
}

/// Inference-mode latent mean.
pub fn encode_mean(items: &[u32], c: &ConditionVector, config: &ModelConfig, params: &ModelParams) -> Result<Vec<f64>> {
    check_condition(c, config)?;
    let input = build_input(items, c, config, &mut Noise::Inference);
    Ok(encode(&input, params).1.mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;

    fn toy(s: usize) -> ModelConfig {
        ModelConfig::new(ModelDims {
            items: 4,
            categories: s,
            hidden: 5,
            latent: 3,
        })
    }

    #[test]
    fn unconditioned_input_has_zero_condition_block() {
        let cfg = toy(2);
        let x = build_input(&[0, 1], &ConditionVector::unconditioned(2), &cfg, &mut Noise::Inference).to_dense();
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(x.len(), 6);
        assert!((x[0] - r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        assert_eq!(&x[2..], &[0.0; 4]);
    }

    #[test]
    fn condition_block_is_raw_one_hot() {
        let cfg = toy(2);
        let c = ConditionVector::category(2, 1).unwrap();
        let mut rng = RngStream::new(4);
        for _ in 0..20 {
            let x = build_input(&[0, 1, 3], &c, &cfg, &mut Noise::Sampled(&mut rng)).to_dense();
            assert_eq!(&x[4..], &[0.0, 1.0]);
            // Kept rating entries are 1/sqrt(3) scaled by 1/(1-p) = 2.
            for &v in &x[..4] {
                assert!(v == 0.0 || (v - 2.0 / libm::sqrt(3.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dropout_then_normalize_order() {
        let mut cfg = toy(0);
        cfg.input_order = InputOrder::DropoutThenNormalize;
        let mut rng = RngStream::new(5);
        let x = build_input(&[0, 1, 2, 3], &ConditionVector::unconditioned(0), &cfg, &mut Noise::Sampled(&mut rng));
        let norm: f64 = x.entries.iter().map(|(_, v)| v * v).sum();
        assert!(x.entries.is_empty() || (norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_params_give_zero_latent_and_logits() {
        let cfg = toy(1);
        let p = ModelParams::zeros(cfg.dims);
        let x = EncoderInput {
            entries: vec![],
            dim: 5,
        };
        let (_, lat) = encode(&x, &p);
        assert_eq!(lat.mu, vec![0.0; 3]);
        assert_eq!(lat.logvar, vec![0.0; 3]);
        assert_eq!(decode(&lat.z, &p).1, vec![0.0; 4]);
    }

    #[test]
    fn full_scale_latent_width() {
        let cfg = ModelConfig::new(ModelDims::new(30, 3));
        let p = ModelParams::init(cfg.dims, &mut RngStream::new(1));
        let x = build_input(&[1, 2], &ConditionVector::unconditioned(3), &cfg, &mut Noise::Inference);
        let (h, lat) = encode(&x, &p);
        assert_eq!((h.len(), lat.mu.len(), lat.logvar.len()), (600, 200, 200));
        assert_eq!(encode(&x, &p).1, lat);
    }

    #[test]
    fn sampling_modes() {
        let mut lat = GaussianLatent {
            mu: vec![0.5, -1.0],
            logvar: vec![f64::NEG_INFINITY, 0.0],
            eps: vec![0.0; 2],
            z: vec![0.0; 2],
        };
        sample_z(&mut lat, &mut Noise::Fixed(&[3.0, 2.0]));
        assert_eq!(lat.z, vec![0.5, 1.0]);
        sample_z(&mut lat, &mut Noise::Inference);
        assert_eq!(lat.z, lat.mu);
    }

    #[test]
    fn sample_moments() {
        let mut rng = RngStream::new(77);
        let n = 10_000;
        let mut zs = Vec::with_capacity(n);
        for _ in 0..n {
            let mut lat = GaussianLatent {
                mu: vec![0.0],
                logvar: vec![0.0],
                eps: vec![0.0],
                z: vec![0.0],
            };
            sample_z(&mut lat, &mut Noise::Sampled(&mut rng));
            zs.push(lat.z[0]);
        }
        let mean = zs.iter().sum::<f64>() / n as f64;
        let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 0.05, "mean {mean}");
        assert!((0.94..=1.06).contains(&var), "var {var}");
    }

    #[test]
    fn decode_depends_on_z() {
        let cfg = toy(0);
        let p = ModelParams::init(cfg.dims, &mut RngStream::new(3));
        let a = decode(&[0.1, 0.2, 0.3], &p).1;
        let b = decode(&[-0.4, 0.2, 0.9], &p).1;
        assert_eq!(a.len(), 4);
        assert_ne!(a, b);
    }

    #[test]
    fn prediction_is_deterministic() {
        let cfg = toy(2);
        let p = ModelParams::init(cfg.dims, &mut RngStream::new(9));
        let c = ConditionVector::category(2, 0).unwrap();
        let a = predict_scores(&[1, 3], &c, &cfg, &p).unwrap();
        let b = predict_scores(&[1, 3], &c, &cfg, &p).unwrap();
        assert_eq!(a, b);
        assert!(predict_scores(&[1], &ConditionVector::unconditioned(1), &cfg, &p).is_err());
    }
}
