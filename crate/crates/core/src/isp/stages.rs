use super::image::{cfa_color, BayerRaw, CfaColor, ImageRgb};
use super::params::IspParams;
use crate::error::{Error, Result};

/// Samples each pixel's CFA channel under the RGGB pattern.
pub fn mosaic(rgb: &ImageRgb) -> Result<BayerRaw> {
    let (h, w) = (rgb.height(), rgb.width());
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Dimension(format!("mosaic needs even dimensions, got {h}x{w}")));
    }
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            data.push(rgb.get(y, x, cfa_color(y, x).channel()));
        }
    }
    BayerRaw::new(h, w, data)
}

/// Reflect-101 index: `-1 -> 1`, `n -> n - 2`. Preserves CFA parity.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

/// Bilinear demosaicing. Sampled channels are copied unchanged; each missing
/// channel is the mean of the nearest same-colour neighbours.
pub fn demosaic_bilinear(raw: &BayerRaw) -> ImageRgb {
    let (h, w) = (raw.height(), raw.width());
    let at = |y: isize, x: isize| raw.get(reflect(y, h), reflect(x, w));
    let mut data = vec![0.0; 3 * h * w];
    let mut put = |y: usize, x: usize, rgb: [f64; 3]| {
        for (c, v) in rgb.into_iter().enumerate() {
            data[(c * h + y) * w + x] = v;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let (yi, xi) = (y as isize, x as isize);
            let centre = raw.get(y, x);
            let cross = (at(yi - 1, xi) + at(yi + 1, xi) + at(yi, xi - 1) + at(yi, xi + 1)) / 4.0;
            let diag = (at(yi - 1, xi - 1) + at(yi - 1, xi + 1) + at(yi + 1, xi - 1) + at(yi + 1, xi + 1)) / 4.0;
            let horiz = (at(yi, xi - 1) + at(yi, xi + 1)) / 2.0;
            let vert = (at(yi - 1, xi) + at(yi + 1, xi)) / 2.0;
            let rgb = match cfa_color(y, x) {
                CfaColor::Red => [centre, cross, diag],
                CfaColor::Blue => [diag, cross, centre],
                // green on a red row: red neighbours left/right, blue above/below
                CfaColor::Green if y % 2 == 0 => [horiz, centre, vert],
                CfaColor::Green => [vert, centre, horiz],
            };
            put(y, x, rgb);
        }
    }
    ImageRgb::from_planar(h, w, data).expect("demosaic of a valid mosaic is valid")
}

pub fn gamma_encode(v: f64, gamma: f64) -> f64 {
    v.max(0.0).powf(1.0 / gamma)
}

pub fn gamma_decode(v: f64, gamma: f64) -> f64 {
    v.max(0.0).powf(gamma)
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

fn invert3(m: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let mat = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
    let svd = mat.svd(false, false);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if smin <= 0.0 || smax / smin >= 1e6 {
        return Err(Error::Parameter(format!(
            "colour correction matrix is singular or ill-conditioned (condition {:.3e})",
            smax / smin
        )));
    }
    let inv = mat.try_inverse().ok_or_else(|| Error::Parameter("singular ccm".into()))?;
    Ok([0, 1, 2].map(|i| [0, 1, 2].map(|j| inv[(i, j)])))
}

/// RAW → RGB: demosaic, white balance, colour correction, gamma encoding.
/// Values are clipped to `[0, 1]` ahead of the gamma curve.
pub fn apply_forward_isp(raw: &BayerRaw, params: &IspParams) -> ImageRgb {
    let rgb = demosaic_bilinear(raw);
    let (h, w) = (rgb.height(), rgb.width());
    let mut out = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let px = [0, 1, 2].map(|c| rgb.get(y, x, c) * params.wb_gains[c]);
            let px = mat_vec(&params.ccm, px);
            for c in 0..3 {
                out[(c * h + y) * w + x] = gamma_encode(px[c].clamp(0.0, 1.0), params.gamma);
            }
        }
    }
    ImageRgb::from_planar(h, w, out).expect("forward ISP output is finite")
}

/// RGB → RAW: the pointwise forward stages inverted in reverse order
/// (gamma decode, inverse CCM, inverse gains), clipped, then mosaicked.
pub fn apply_inverse_isp(rgb: &ImageRgb, params: &IspParams) -> Result<BayerRaw> {
    let inv = invert3(&params.ccm)?;
    if params.wb_gains.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Parameter("white-balance gains must be positive".into()));
    }
    let (h, w) = (rgb.height(), rgb.width());
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Dimension(format!("mosaic needs even dimensions, got {h}x{w}")));
    }
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let px = [0, 1, 2].map(|c| gamma_decode(rgb.get(y, x, c), params.gamma));
            let lin = mat_vec(&inv, px);
            let c = cfa_color(y, x).channel();
            data.push((lin[c] / params.wb_gains[c]).clamp(0.0, 1.0));
        }
    }
    BayerRaw::new(h, w, data)
}
