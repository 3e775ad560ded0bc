//! Central finite-difference gradient checking.

use alloc::vec::Vec;

/// Relative error used to compare an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares `analytic` against central differences `(f(x+h) - f(x-h)) / 2h`
/// at every coordinate of `params` and returns the maximum relative error.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "one analytic derivative per parameter");
    let mut x: Vec<f64> = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = f(&x);
        x[i] = orig - h;
        let minus = f(&x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_is_exact() {
        let err = grad_check(|w| w[0] * w[0], &[0.3], &[0.6], 1e-5);
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        // Doubled analytic gradient: |1.2 - 0.6| / max(1.2, 0.6) = 0.5.
        let err = grad_check(|w| w[0] * w[0], &[0.3], &[1.2], 1e-5);
        assert!((err - 0.5).abs() < 1e-6, "{err}");
    }

    #[test]
    fn multivariate() {
        let f = |w: &[f64]| w[0] * w[1] + libm::sin(w[2]);
        let p = [0.5, -1.5, 0.25];
        let g = [p[1], p[0], libm::cos(p[2])];
        assert!(grad_check(f, &p, &g, 1e-5) <= 1e-8);
    }
}
