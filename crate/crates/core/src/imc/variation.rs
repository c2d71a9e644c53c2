use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::snn::Model;

/// Multiplies every crossbar-mapped weight by `1 + eps`, `eps ~ N(0, sigma_over_mu)`.
/// Biases and normalization parameters live in digital logic and are left
/// untouched. Deterministic under `seed`; `sigma_over_mu == 0` is the identity.
pub fn apply_device_variation(model: &Model, sigma_over_mu: f64, seed: u64) -> Result<Model> {
    if !(sigma_over_mu >= 0.0 && sigma_over_mu.is_finite()) {
        return Err(Error::arg(format!("sigma_over_mu = {sigma_over_mu} must be >= 0")));
    }
    let mut out = model.clone();
    if sigma_over_mu == 0.0 {
        return Ok(out);
    }
    let noise = Normal::new(0.0f64, sigma_over_mu).map_err(|e| Error::arg(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in out.params_mut() {
        if let Some(w) = p.weight_mut() {
            for v in w.data_mut() {
                *v = (*v as f64 * (1.0 + noise.sample(&mut rng))) as f32;
            }
        }
    }
    Ok(out)
}

/// Raw multiplicative factors `1 + eps` as drawn by [`apply_device_variation`].
pub fn variation_factors(n: usize, sigma_over_mu: f64, seed: u64) -> Result<Vec<f64>> {
    let noise = Normal::new(0.0f64, sigma_over_mu).map_err(|e| Error::arg(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| 1.0 + noise.sample(&mut rng)).collect())
}
