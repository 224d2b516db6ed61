/// Central finite-difference gradient of `loss` at `params`.
///
/// Each coordinate is perturbed by `+h` and `-h` in turn; `loss` must be
/// deterministic.
pub fn finite_diff_gradient<F>(mut loss: F, params: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = loss(&probe);
            probe[i] = orig - h;
            let minus = loss(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Default perturbation for [`finite_diff_gradient`].
pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero pairs from
/// blowing up the ratio.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let g = finite_diff_gradient(|p| p[0] * p[0], &[3.0], DEFAULT_STEP);
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = finite_diff_gradient(|_| 4.2, &[1.0, -2.0, 0.5], DEFAULT_STEP);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn sine_at_zero() {
        let g = finite_diff_gradient(|p| p[0].sin(), &[0.0], DEFAULT_STEP);
        assert!((g[0] - 0.0f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn multivariate_coordinates_are_independent() {
        let g = finite_diff_gradient(|p| 2.0 * p[0] + p[1] * p[1] * p[1], &[1.0, 2.0], DEFAULT_STEP);
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 12.0).abs() < 1e-8);
    }
}
