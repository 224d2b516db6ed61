use super::rng::Rng;
use crate::error::{contract, Result};

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`, so inference needs no rescaling.
pub fn dropout_mask(rng: &mut Rng, len: usize, rate: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(contract(format!("dropout rate {rate} outside [0, 1)")));
    }
    if rate == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.uniform(0.0, 1.0) < rate { 0.0 } else { keep })
        .collect())
}
