use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::image::BayerRaw;
use crate::error::{Error, Result};

/// Shot noise `λ·Poisson(v/λ)` (variance `λ·v`) when `lambda > 0`, then
/// additive Gaussian read noise of standard deviation `sigma`, then clipping.
pub fn add_sensor_noise(raw: &BayerRaw, sigma: f64, lambda: f64, rng: &mut impl Rng) -> Result<BayerRaw> {
    let noisy = sensor_noise_unclipped(raw.data(), sigma, lambda, rng)?;
    Ok(BayerRaw::from_clamped(raw.height(), raw.width(), noisy))
}

/// The noise model of [`add_sensor_noise`] on raw values, before clipping.
pub fn sensor_noise_unclipped(
    values: &[f64],
    sigma: f64,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) || !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!(
            "noise levels must be finite and non-negative (sigma {sigma}, lambda {lambda})"
        )));
    }
    let gauss = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let mut v = v;
        if lambda > 0.0 && v > 0.0 {
            let counts: f64 = Poisson::new(v / lambda)
                .map_err(|e| Error::Parameter(e.to_string()))?
                .sample(rng);
            v = counts * lambda;
        }
        if sigma > 0.0 {
            v += gauss.sample(rng);
        }
        out.push(v);
    }
    Ok(out)
}
