//! Inverted dropout masks.

use crate::error::{Error, Result};
use crate::rng::XRng;
use rand::Rng;

/// A dropout mask of `len` entries, each 0 with probability `rate` and
/// `1/(1-rate)` otherwise (inverted dropout: the expected value of a masked
/// activation equals the unmasked one, so inference is a plain forward pass).
///
/// `rate == 0` returns an all-ones mask without consuming randomness.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut XRng) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if rate == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let scale = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
        .collect())
}

/// Multiply activations by a mask in place.
pub fn apply_mask(values: &mut [f64], mask: &[f64]) {
    debug_assert_eq!(values.len(), mask.len());
    for (v, &m) in values.iter_mut().zip(mask) {
        *v *= m;
    }
}
