use crate::error::{Error, Result};
use crate::isp::ImageRgb;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_shapes(a: &ImageRgb, b: &ImageRgb) -> Result<()> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::Dimension(format!(
            "image shapes differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

pub fn mse(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    check_shapes(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n)
}

/// Peak signal-to-noise ratio in dB for unit peak; `f64::INFINITY` for identical images.
pub fn psnr(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * m.log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filtering, keeping only fully covered positions.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ho, wo) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            rows[y * wo + x] = (0..SSIM_WINDOW).map(|k| win[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = (0..SSIM_WINDOW).map(|k| win[k] * rows[(y + k) * wo + x]).sum();
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term over all channels.
fn ssim_parts(a: &ImageRgb, b: &ImageRgb) -> Result<(f64, f64)> {
    check_shapes(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let (c1, c2) = (K1 * K1, K2 * K2);
    let (mut total, mut total_cs, mut count) = (0.0, 0.0, 0usize);
    for c in 0..3 {
        let (pa, pb) = (a.plane(c), b.plane(c));
        let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { pa.iter().zip(pb).map(|(&x, &y)| f(x, y)).collect() };
        let mu_a = filter_valid(pa, h, w, &win);
        let mu_b = filter_valid(pb, h, w, &win);
        let aa = filter_valid(&prod(|x, _| x * x), h, w, &win);
        let bb = filter_valid(&prod(|_, y| y * y), h, w, &win);
        let ab = filter_valid(&prod(|x, y| x * y), h, w, &win);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            let cs = (2.0 * cov + c2) / (va + vb + c2);
            let lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            total += lum * cs;
            total_cs += cs;
            count += 1;
        }
    }
    Ok((total / count as f64, total_cs / count as f64))
}

/// Single-scale SSIM: 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03,
/// averaged over the valid window positions of all three channels.
pub fn ssim(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    ssim_parts(a, b).map(|p| p.0)
}

/// The contrast-structure factor of [`ssim`] alone.
pub fn ssim_contrast_structure(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    ssim_parts(a, b).map(|p| p.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random_image(h: usize, w: usize, lo: f64, hi: f64, seed: u64) -> ImageRgb {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..3 * h * w).map(|_| rng.random_range(lo..hi)).collect();
        ImageRgb::from_planar(h, w, data).unwrap()
    }

    fn textured(h: usize, w: usize) -> ImageRgb {
        ImageRgb::from_fn(h, w, |y, x, c| 0.45 + 0.3 * ((x as f64 * 0.4 + c as f64).sin() * (y as f64 * 0.3).cos()))
    }

    fn noisy(img: &ImageRgb, sigma: f64, seed: u64) -> ImageRgb {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).unwrap();
        let data = img.data().iter().map(|v| v + n.sample(&mut rng)).collect();
        ImageRgb::from_planar(img.height(), img.width(), data).unwrap()
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let x = random_image(8, 8, 0.0, 1.0, 1);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_of_a_uniform_offset() {
        let a = ImageRgb::uniform(5, 7, [0.0; 3]);
        let b = ImageRgb::uniform(5, 7, [0.1; 3]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_matches_direct_formula() {
        for seed in 0..10 {
            let a = random_image(9, 13, 0.0, 1.0, seed);
            let b = random_image(9, 13, 0.0, 1.0, seed + 100);
            let mut acc = 0.0;
            for c in 0..3 {
                for y in 0..9 {
                    for x in 0..13 {
                        acc += (a.get(y, x, c) - b.get(y, x, c)).powi(2);
                    }
                }
            }
            let expected = 10.0 * (1.0 / (acc / (3.0 * 9.0 * 13.0))).log10();
            let got = psnr(&a, &b).unwrap();
            assert!((got - expected).abs() < 1e-9);
            assert_eq!(got, psnr(&b, &a).unwrap());
        }
    }

    #[test]
    fn psnr_decreases_with_more_noise() {
        let x = textured(32, 32);
        let mut last = f64::INFINITY;
        for (i, s) in [0.01, 0.03, 0.06, 0.1].into_iter().enumerate() {
            let p = psnr(&noisy(&x, s, 3 + i as u64), &x).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = ImageRgb::uniform(4, 4, [0.0; 3]);
        let b = ImageRgb::uniform(4, 6, [0.0; 3]);
        assert!(matches!(psnr(&a, &b), Err(Error::Dimension(_))));
        assert!(matches!(ssim(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let x = random_image(24, 20, 0.0, 1.0, 4);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contrast_structure_ignores_a_shared_offset() {
        let a = random_image(24, 24, 0.0, 0.7, 5);
        let b = noisy(&a, 0.05, 6);
        let b = ImageRgb::from_planar(24, 24, b.data().iter().map(|v| v.min(0.7)).collect()).unwrap();
        let shift = |img: &ImageRgb| ImageRgb::from_planar(24, 24, img.data().iter().map(|v| v + 0.25).collect()).unwrap();
        let before = ssim_contrast_structure(&a, &b).unwrap();
        let after = ssim_contrast_structure(&shift(&a), &shift(&b)).unwrap();
        assert!((before - after).abs() < 1e-6, "{before} vs {after}");
    }

    #[test]
    fn ssim_falls_as_noise_grows() {
        let x = textured(48, 48);
        let scores: Vec<f64> = [0.0, 0.02, 0.05, 0.1, 0.2]
            .iter()
            .enumerate()
            .map(|(i, &s)| if s == 0.0 { ssim(&x, &x).unwrap() } else { ssim(&noisy(&x, s, 20 + i as u64), &x).unwrap() })
            .collect();
        for w in scores.windows(2) {
            assert!(w[1] < w[0], "{scores:?}");
        }
        assert!(scores.iter().all(|s| (-1.0..=1.0).contains(s)));
    }
}
