//! Elementwise activations, softmax, normalization, dropout and initializers.

use alloc::vec::Vec;

use crate::matrix::{norm2, Matrix};
use crate::rng::RngStream;

/// Standard deviation of the bias initializer.
pub const BIAS_INIT_STD: f64 = 0.001;

pub fn tanh_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| libm::tanh(v)).collect()
}

/// Gradient through `y = tanh(x)` given the forward output `y`.
pub fn tanh_backward(y: &[f64], upstream: &[f64]) -> Vec<f64> {
    debug_assert_eq!(y.len(), upstream.len());
    y.iter().zip(upstream).map(|(&y, &g)| g * (1.0 - y * y)).collect()
}

/// Max-subtracted log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&v| libm::exp(v - max)).sum();
    let log_z = max + libm::log(sum);
    logits.iter().map(|&v| v - log_z).collect()
}

/// Scales `x` to unit Euclidean norm; the zero vector is returned unchanged.
pub fn l2_normalize(x: &[f64]) -> Vec<f64> {
    let n = norm2(x);
    if n == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|v| v / n).collect()
}

/// Inverted dropout. Returns the output and the per-entry multiplier
/// (`0` or `1/(1-p)` in training mode, all `1` otherwise).
pub fn dropout_forward(x: &[f64], p: f64, rng: &mut RngStream, training: bool) -> (Vec<f64>, Vec<f64>) {
    debug_assert!((0.0..1.0).contains(&p));
    if !training || p == 0.0 {
        return (x.to_vec(), alloc::vec![1.0; x.len()]);
    }
    let keep_scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.uniform() < p { 0.0 } else { keep_scale })
        .collect();
    let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
    (y, mask)
}

/// Glorot/Xavier uniform weights on `±sqrt(6 / (rows + cols))`.
pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    let bound = libm::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols).map(|_| rng.uniform_range(-bound, bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape by construction")
}

/// Bias row vector drawn from `N(0, 0.001²)`.
pub fn bias_init(len: usize, rng: &mut RngStream) -> Matrix {
    Matrix::row_vector((0..len).map(|_| rng.normal(0.0, BIAS_INIT_STD)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use alloc::vec;

    #[test]
    fn tanh_at_zero() {
        assert_eq!(tanh_forward(&[0.0]), vec![0.0]);
        assert_eq!(tanh_backward(&[0.0], &[1.0]), vec![1.0]);
    }

    #[test]
    fn tanh_saturates() {
        let y = tanh_forward(&[40.0, -40.0]);
        assert!((y[0] - 1.0).abs() < 1e-15);
        assert!((y[1] + 1.0).abs() < 1e-15);
        assert!(tanh_forward(&[3.0])[0].abs() < 1.0);
    }

    #[test]
    fn tanh_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(9);
        let x: Vec<f64> = (0..8).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let up: Vec<f64> = (0..8).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let f = |x: &[f64]| tanh_forward(x).iter().zip(&up).map(|(a, b)| a * b).sum::<f64>();
        let analytic = tanh_backward(&tanh_forward(&x), &up);
        let err = grad_check(f, &x, &analytic, 1e-5);
        assert!(err <= 1e-7, "rel err {err}");
    }

    #[test]
    fn log_softmax_uniform() {
        for v in log_softmax(&[0.0; 4]) {
            assert!((v - libm::log(0.25)).abs() < 1e-15);
        }
    }

    #[test]
    fn log_softmax_shift_invariant_and_normalized() {
        let mut rng = RngStream::new(10);
        let x: Vec<f64> = (0..10).map(|_| rng.uniform_range(-5.0, 5.0)).collect();
        let shifted: Vec<f64> = x.iter().map(|v| v + 123.0).collect();
        let a = log_softmax(&x);
        let b = log_softmax(&shifted);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-12);
        }
        let s: f64 = a.iter().map(|v| libm::exp(*v)).sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn log_softmax_large_logits_stay_finite() {
        let out = log_softmax(&[1000.0, 0.0, -1000.0]);
        assert!(out.iter().all(|v| v.is_finite()));
        assert!(out[0].abs() < 1e-12);
    }

    #[test]
    fn l2_cases() {
        assert_eq!(l2_normalize(&[3.0, 4.0]), vec![0.6, 0.8]);
        assert_eq!(l2_normalize(&[0.0, 1.0]), vec![0.0, 1.0]);
        assert_eq!(l2_normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn dropout_degenerate_modes() {
        let mut rng = RngStream::new(1);
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(dropout_forward(&x, 0.0, &mut rng, true).0, x);
        let (y, mask) = dropout_forward(&x, 0.5, &mut rng, false);
        assert_eq!(y, x);
        assert_eq!(mask, vec![1.0; 3]);
    }

    #[test]
    fn dropout_preserves_mean() {
        let mut rng = RngStream::new(2);
        let x = vec![1.0; 100_000];
        let (y, mask) = dropout_forward(&x, 0.5, &mut rng, true);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
        assert!(mask.iter().all(|&m| m == 0.0 || m == 2.0));
    }

    #[test]
    fn xavier_within_bound() {
        let mut rng = RngStream::new(3);
        let w = xavier_uniform(30, 20, &mut rng);
        let bound = libm::sqrt(6.0 / 50.0);
        assert!(w.as_slice().iter().all(|v| v.abs() <= bound));
        let max = w.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max > 0.9 * bound);
    }

    #[test]
    fn bias_std() {
        let mut rng = RngStream::new(4);
        let b = bias_init(100_000, &mut rng);
        let n = b.len() as f64;
        let mean = b.as_slice().iter().sum::<f64>() / n;
        let var = b.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let std = libm::sqrt(var);
        assert!((std - BIAS_INIT_STD).abs() <= 0.05 * BIAS_INIT_STD, "std {std}");
    }

    #[test]
    fn init_is_deterministic() {
        let a = xavier_uniform(5, 7, &mut RngStream::new(8));
        let b = xavier_uniform(5, 7, &mut RngStream::new(8));
        assert_eq!(a, b);
    }
}
