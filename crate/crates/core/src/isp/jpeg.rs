//! Baseline-JPEG quantisation round trip without entropy coding.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::image::ImageRgb;
use crate::error::{Error, Result};

#[rustfmt::skip]
const LUMA_Q: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

#[rustfmt::skip]
const CHROMA_Q: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// IJG quality scaling of a base table.
pub fn scaled_table(base: &[u16; 64], quality: u8) -> [f64; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    base.map(|t| ((t as u32 * scale + 50) / 100).clamp(1, 255) as f64)
}

fn dct_matrix() -> &'static [[f64; 8]; 8] {
    static M: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (u, row) in m.iter_mut().enumerate() {
            let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = a * (((2 * x + 1) as f64 * u as f64 * PI) / 16.0).cos();
            }
        }
        m
    })
}

/// Orthonormal 2-d DCT-II of one block (`inverse` applies the transpose).
fn dct8x8(block: &[f64; 64], inverse: bool) -> [f64; 64] {
    let m = dct_matrix();
    let coef = |a: usize, b: usize| if inverse { m[b][a] } else { m[a][b] };
    let mut tmp = [0.0; 64];
    for u in 0..8 {
        for x in 0..8 {
            tmp[u * 8 + x] = (0..8).map(|y| coef(u, y) * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            out[u * 8 + v] = (0..8).map(|x| coef(v, x) * tmp[u * 8 + x]).sum();
        }
    }
    out
}

fn rgb_to_ycbcr(r: f64, g: f64, b: f64) -> [f64; 3] {
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        -0.168_735_892 * r - 0.331_264_108 * g + 0.5 * b + 128.0,
        0.5 * r - 0.418_687_589 * g - 0.081_312_411 * b + 128.0,
    ]
}

fn ycbcr_to_rgb(y: f64, cb: f64, cr: f64) -> [f64; 3] {
    let (cb, cr) = (cb - 128.0, cr - 128.0);
    [
        y + 1.402 * cr,
        y - 0.344_136_286 * cb - 0.714_136_286 * cr,
        y + 1.772 * cb,
    ]
}

/// JPEG-style lossy round trip: YCbCr on the 0..255 scale (4:4:4), blockwise DCT with
/// Annex-K tables scaled by `quality`, quantise/dequantise, inverse DCT.
/// Edges are replicated up to a multiple of 8 and cropped afterwards.
pub fn jpeg_quantize(rgb: &ImageRgb, quality: u8) -> Result<ImageRgb> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Parameter(format!("jpeg quality {quality} outside [1, 100]")));
    }
    let (h, w) = (rgb.height(), rgb.width());
    let (ph, pw) = (h.div_ceil(8) * 8, w.div_ceil(8) * 8);
    let mut planes = vec![vec![0.0; ph * pw]; 3];
    for y in 0..ph {
        for x in 0..pw {
            let (sy, sx) = (y.min(h - 1), x.min(w - 1));
            let px = [0, 1, 2].map(|c| rgb.get(sy, sx, c) * 255.0);
            let ycc = rgb_to_ycbcr(px[0], px[1], px[2]);
            for c in 0..3 {
                planes[c][y * pw + x] = ycc[c];
            }
        }
    }
    let tables = [
        scaled_table(&LUMA_Q, quality),
        scaled_table(&CHROMA_Q, quality),
        scaled_table(&CHROMA_Q, quality),
    ];
    for (plane, table) in planes.iter_mut().zip(&tables) {
        for by in (0..ph).step_by(8) {
            for bx in (0..pw).step_by(8) {
                let mut block = [0.0; 64];
                for i in 0..8 {
                    for j in 0..8 {
                        block[i * 8 + j] = plane[(by + i) * pw + bx + j] - 128.0;
                    }
                }
                let mut coef = dct8x8(&block, false);
                for (c, q) in coef.iter_mut().zip(table) {
                    *c = (*c / q).round() * q;
                }
                let rec = dct8x8(&coef, true);
                for i in 0..8 {
                    for j in 0..8 {
                        plane[(by + i) * pw + bx + j] = rec[i * 8 + j] + 128.0;
                    }
                }
            }
        }
    }
    let mut out = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * pw + x;
            let px = ycbcr_to_rgb(planes[0][i], planes[1][i], planes[2][i]);
            for c in 0..3 {
                out[(c * h + y) * w + x] = px[c] / 255.0;
            }
        }
    }
    ImageRgb::from_planar(h, w, out)
}
