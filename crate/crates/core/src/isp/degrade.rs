use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::ImageRgb;
use super::jpeg::jpeg_quantize;
use super::noise::add_sensor_noise;
use super::params::{sample_params, DegradationProfile, IspParams};
use super::stages::{apply_forward_isp, apply_inverse_isp};
use crate::error::Result;

/// Renders `clean` through a simulated camera: invert to RAW with the
/// canonical camera, add sensor noise, develop with `params`, JPEG-quantise.
/// Noise is drawn from `params.seed`.
pub fn degrade(clean: &ImageRgb, params: &IspParams) -> Result<ImageRgb> {
    let raw = apply_inverse_isp(clean, &IspParams::canonical())?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noisy = add_sensor_noise(&raw, params.gauss_sigma, params.poisson_lambda, &mut rng)?;
    let developed = apply_forward_isp(&noisy, params);
    jpeg_quantize(&developed, params.jpeg_qf)
}

/// A degraded view together with the parameters that produced it.
#[derive(Debug, Clone)]
pub struct DegradedView {
    pub image: ImageRgb,
    pub params: IspParams,
}

pub fn degrade_random(clean: &ImageRgb, profile: &DegradationProfile, rng: &mut impl Rng) -> Result<DegradedView> {
    let params = sample_params(profile, rng)?;
    Ok(DegradedView {
        image: degrade(clean, &params)?,
        params,
    })
}

/// Two independent degradations of the same clean image.
pub fn make_pair(
    clean: &ImageRgb,
    profile: &DegradationProfile,
    rng: &mut impl Rng,
) -> Result<(DegradedView, DegradedView)> {
    let a = degrade_random(clean, profile, rng)?;
    let b = degrade_random(clean, profile, rng)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::gen_toy_corpus;
    use crate::evaluation::psnr;

    fn clean_images(n: usize) -> Vec<ImageRgb> {
        gen_toy_corpus(n, 4, 21).unwrap().into_iter().map(|s| s.clean).collect()
    }

    #[test]
    fn noiseless_identity_degradation_only_loses_demosaic_detail() {
        let params = IspParams {
            gamma: 2.2,
            ..IspParams::identity()
        };
        for clean in clean_images(8) {
            let out = degrade(&clean, &params).unwrap();
            let p = psnr(&out, &clean).unwrap();
            assert!(p >= 30.0, "psnr {p}");
        }
    }

    #[test]
    fn pair_views_differ_but_share_content() {
        let clean = &clean_images(1)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, b) = make_pair(clean, &DegradationProfile::default_preset(), &mut rng).unwrap();
        assert_ne!(a.image, b.image);
        assert_ne!(a.params, b.params);
        let inter = psnr(&a.image, &b.image).unwrap();
        assert!(inter > 12.0 && inter.is_finite(), "intra-pair psnr {inter}");
    }

    #[test]
    fn dark_profile_is_harsher_than_default() {
        for (i, clean) in clean_images(6).iter().enumerate() {
            let seed = 100 + i as u64;
            let d = degrade_random(clean, &DegradationProfile::default_preset(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let k = degrade_random(clean, &DegradationProfile::dark_preset(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let (pd, pk) = (psnr(&d.image, clean).unwrap(), psnr(&k.image, clean).unwrap());
            assert!(pk < pd, "dark {pk} dB vs default {pd} dB");
        }
    }

    #[test]
    fn degradation_is_deterministic() {
        let clean = &clean_images(1)[0];
        let profile = DegradationProfile::dark_preset();
        let a = degrade_random(clean, &profile, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = degrade_random(clean, &profile, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a.image, b.image);
    }
}
