use alloc::vec::Vec;

use super::{ForwardCache, ModelParams};
use crate::matrix::{add_outer, add_sparse_outer, axpy, matvec};
use crate::ops::tanh_backward;

/// Gradients of the cached example's total loss w.r.t. every parameter.
pub fn backward(cache: &ForwardCache, params: &ModelParams) -> ModelParams {
    let mut grads = ModelParams::zeros(params.dims);
    accumulate_backward(cache, params, &mut grads, 1.0);
    grads
}

/// Adds `scale ·` the gradients of one example into `grads`.
///
/// The dropout multipliers are baked into the cached input and the
/// condition mask is a constant, so neither is differentiated.
pub fn accumulate_backward(cache: &ForwardCache, params: &ModelParams, grads: &mut ModelParams, scale: f64) {
    let lat = &cache.latent;
    let beta = cache.beta;

    // d(nll)/d(logits) = (Σ_i mask_i r_i) · softmax - mask ⊙ r.
    let target_mass: f64 = cache.targets.iter().map(|&i| cache.mask[i as usize]).sum();
    let mut d_logits: Vec<f64> = cache
        .log_probs
        .iter()
        .map(|&lp| scale * target_mass * libm::exp(lp))
        .collect();
    for &i in &cache.targets {
        d_logits[i as usize] -= scale * cache.mask[i as usize];
    }

    // Decoder output layer.
    axpy(1.0, &d_logits, grads.dec_b2.as_mut_slice());
    add_outer(&mut grads.dec_w2, &cache.hidden_dec, &d_logits);
    let d_hidden_dec = tanh_backward(&cache.hidden_dec, &matvec(&params.dec_w2, &d_logits));

    // Decoder hidden layer.
    axpy(1.0, &d_hidden_dec, grads.dec_b1.as_mut_slice());
    add_outer(&mut grads.dec_w1, &lat.z, &d_hidden_dec);
    let d_z = matvec(&params.dec_w1, &d_hidden_dec);

    // Reparameterization and KL: z = mu + eps·exp(lv/2),
    // dKL/dmu = mu, dKL/dlv = (exp(lv) - 1)/2.
    let d = lat.mu.len();
    let mut d_mu = Vec::with_capacity(d);
    let mut d_logvar = Vec::with_capacity(d);
    for (k, &dz) in d_z.iter().enumerate().take(d) {
        let var = libm::exp(lat.logvar[k]);
        let sigma = libm::exp(0.5 * lat.logvar[k]);
        d_mu.push(dz + scale * beta * lat.mu[k]);
        d_logvar.push(dz * lat.eps[k] * 0.5 * sigma + scale * beta * 0.5 * (var - 1.0));
    }

    // Encoder heads.
    axpy(1.0, &d_mu, grads.enc_b_mu.as_mut_slice());
    add_outer(&mut grads.enc_w_mu, &cache.hidden_enc, &d_mu);
    axpy(1.0, &d_logvar, grads.enc_b_logvar.as_mut_slice());
    add_outer(&mut grads.enc_w_logvar, &cache.hidden_enc, &d_logvar);
    let mut d_hidden_enc = matvec(&params.enc_w_mu, &d_mu);
    axpy(1.0, &matvec(&params.enc_w_logvar, &d_logvar), &mut d_hidden_enc);
    let d_pre_enc = tanh_backward(&cache.hidden_enc, &d_hidden_enc);

    // Encoder input layer; the input is sparse.
    axpy(1.0, &d_pre_enc, grads.enc_b1.as_mut_slice());
    add_sparse_outer(&mut grads.enc_w1, &cache.input.entries, &d_pre_enc);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ConditionVector, ItemConditionMatrix};
    use crate::gradcheck::grad_check;
    use crate::model::{forward_loss, ModelConfig, ModelDims, Noise};
    use crate::rng::RngStream;
    use alloc::string::String;
    use alloc::vec;

    fn toy() -> (ModelConfig, ItemConditionMatrix) {
        let dims = ModelDims {
            items: 6,
            categories: 2,
            hidden: 5,
            latent: 3,
        };
        let g = ItemConditionMatrix::new(
            vec![vec![0], vec![0, 1], vec![1], vec![], vec![1], vec![0]],
            vec![String::from("A"), String::from("B")],
        )
        .unwrap();
        (ModelConfig::new(dims), g)
    }

    fn check(c: ConditionVector, beta: f64, seed: u64) -> f64 {
        let (cfg, g) = toy();
        let mut rng = RngStream::new(seed);
        let params = ModelParams::init(cfg.dims, &mut rng);
        let eps: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
        let items = [0u32, 2, 4, 5];
        let loss_at = |flat: &[f64]| {
            let p = ModelParams::unflatten(cfg.dims, flat).unwrap();
            forward_loss(&items, &c, Some(&g), &cfg, &p, beta, &mut Noise::Fixed(&eps))
                .unwrap()
                .0
                .total
        };
        let (_, cache) = forward_loss(&items, &c, Some(&g), &cfg, &params, beta, &mut Noise::Fixed(&eps)).unwrap();
        let analytic = backward(&cache, &params).flatten();
        grad_check(loss_at, &params.flatten(), &analytic, 1e-5)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            for c in [
                ConditionVector::unconditioned(2),
                ConditionVector::category(2, 0).unwrap(),
                ConditionVector::category(2, 1).unwrap(),
            ] {
                let err = check(c, 0.3, seed);
                assert!(err <= 1e-4, "seed {seed} {c:?}: {err}");
            }
        }
    }

    #[test]
    fn beta_zero_logvar_gradient_only_through_sampling() {
        let (cfg, g) = toy();
        let params = ModelParams::init(cfg.dims, &mut RngStream::new(5));
        let c = ConditionVector::category(2, 1).unwrap();
        let (_, cache) =
            forward_loss(&[1, 2], &c, Some(&g), &cfg, &params, 0.0, &mut Noise::Fixed(&[0.0; 3])).unwrap();
        let grads = backward(&cache, &params);
        assert!(grads.enc_w_logvar.as_slice().iter().all(|&v| v == 0.0));
        assert!(grads.enc_b_logvar.as_slice().iter().all(|&v| v == 0.0));
        let (_, cache) =
            forward_loss(&[1, 2], &c, Some(&g), &cfg, &params, 0.0, &mut Noise::Fixed(&[1.0, -0.5, 2.0])).unwrap();
        assert!(backward(&cache, &params).enc_w_logvar.as_slice().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn active_condition_row_receives_gradient() {
        let (cfg, g) = toy();
        let params = ModelParams::init(cfg.dims, &mut RngStream::new(6));
        let c = ConditionVector::category(2, 1).unwrap();
        let (_, cache) =
            forward_loss(&[1, 2, 3], &c, Some(&g), &cfg, &params, 0.2, &mut Noise::Fixed(&[0.3, 0.1, -0.2])).unwrap();
        let grads = backward(&cache, &params);
        assert!(grads.enc_w1.row(6 + 1).iter().any(|&v| v != 0.0));
        assert!(grads.enc_w1.row(6).iter().all(|&v| v == 0.0));
    }
}
