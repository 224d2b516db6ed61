use crate::error::{contract, Result};

/// Floor applied to the target probability before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Categorical cross-entropy `-ln(pred[target])`.
pub fn cross_entropy(pred: &[f64], target: usize) -> Result<f64> {
    let p = pred
        .get(target)
        .ok_or_else(|| contract(format!("target class {target} out of range for {} classes", pred.len())))?;
    Ok(-p.max(PROB_FLOOR).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_zero() {
        let mut p = vec![0.0; 10];
        p[3] = 1.0;
        assert_eq!(cross_entropy(&p, 3).unwrap(), 0.0);
    }

    #[test]
    fn uniform_is_ln_ten() {
        let p = vec![0.1; 10];
        assert!((cross_entropy(&p, 7).unwrap() - std::f64::consts::LN_10).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let mut p = vec![0.0; 10];
        p[0] = 1.0;
        // -ln(1e-12) = 12 ln 10
        let expected = 12.0 * std::f64::consts::LN_10;
        assert!((cross_entropy(&p, 4).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 27.631).abs() < 1e-3);
    }

    #[test]
    fn out_of_range_target() {
        assert!(cross_entropy(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn nonnegative() {
        for p in [0.01, 0.3, 0.999] {
            assert!(cross_entropy(&[p, 1.0 - p], 0).unwrap() >= 0.0);
        }
    }
}
