//! Bias-corrected Adam.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// Optimizer state for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            config,
        }
    }
}

/// One Adam step on `param` in place. A non-finite gradient leaves both the
/// parameter and the state untouched.
pub fn adam_update(param: &mut [f64], grad: &[f64], state: &mut AdamState) -> Result<()> {
    if param.len() != grad.len() || param.len() != state.first_moment.len() {
        return Err(Error::DimensionMismatch {
            op: "adam_update",
            left: (param.len(), 1),
            right: (grad.len(), state.first_moment.len()),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps_hat,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(beta1, t as f64);
    let bc2 = 1.0 - libm::pow(beta2, t as f64);
    for (((p, &g), m), v) in param
        .iter_mut()
        .zip(grad)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (libm::sqrt(v_hat) + eps_hat);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = [0.5, -2.0];
        let mut s = AdamState::new(2, AdamConfig::default());
        adam_update(&mut p, &[0.0, 0.0], &mut s).unwrap();
        assert_eq!(p, [0.5, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let cfg = AdamConfig::default();
        let mut p = [1.0, 1.0, 1.0];
        let mut s = AdamState::new(3, cfg);
        adam_update(&mut p, &[3.0, -0.2, 1e-3], &mut s).unwrap();
        assert!((p[0] - (1.0 - cfg.lr)).abs() < 1e-10);
        assert!((p[1] - (1.0 + cfg.lr)).abs() < 1e-10);
        assert!((p[2] - (1.0 - cfg.lr)).abs() < 1e-7);
    }

    #[test]
    fn descends_a_parabola() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut w = [1.0];
        let mut s = AdamState::new(1, cfg);
        for _ in 0..200 {
            let g = [2.0 * w[0]];
            adam_update(&mut w, &g, &mut s).unwrap();
        }
        assert!(w[0].abs() < 0.1, "w = {}", w[0]);
        assert_eq!(s.step, 200);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = [1.0];
        let mut s = AdamState::new(1, AdamConfig::default());
        assert_eq!(
            adam_update(&mut p, &[f64::NAN], &mut s),
            Err(Error::NonFinite("gradient"))
        );
        assert_eq!(s.step, 0);
        assert_eq!(p, [1.0]);
    }
}
