use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::isp::ImageRgb;

pub const MAX_CLASSES: usize = 10;
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFamily {
    Disk,
    Square,
    Triangle,
    Ring,
    Cross,
    Diamond,
    Frame,
    Bar,
    Crescent,
    Star,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; MAX_CLASSES] = [
        ShapeFamily::Disk,
        ShapeFamily::Square,
        ShapeFamily::Triangle,
        ShapeFamily::Ring,
        ShapeFamily::Cross,
        ShapeFamily::Diamond,
        ShapeFamily::Frame,
        ShapeFamily::Bar,
        ShapeFamily::Crescent,
        ShapeFamily::Star,
    ];

    pub fn from_label(label: usize) -> Option<Self> {
        Self::ALL.get(label).copied()
    }

    /// Membership test in the shape's unit frame (shape radius 1).
    fn contains(self, x: f64, y: f64) -> bool {
        let r = x.hypot(y);
        match self {
            ShapeFamily::Disk => r < 1.0,
            ShapeFamily::Square => x.abs().max(y.abs()) < 0.8,
            ShapeFamily::Triangle => {
                // Equilateral, circumradius 1, apex up.
                let s3 = 3f64.sqrt();
                y > -0.5 && s3 * x - y > -1.0 && -s3 * x - y > -1.0
            }
            ShapeFamily::Ring => (0.6..1.0).contains(&r),
            ShapeFamily::Cross => (x.abs() < 0.3 && y.abs() < 1.0) || (y.abs() < 0.3 && x.abs() < 1.0),
            ShapeFamily::Diamond => x.abs() + y.abs() < 1.0,
            ShapeFamily::Frame => {
                let m = x.abs().max(y.abs());
                (0.5..0.85).contains(&m)
            }
            ShapeFamily::Bar => x.abs() < 1.0 && y.abs() < 0.3,
            ShapeFamily::Crescent => r < 1.0 && (x - 0.45).hypot(y) > 0.75,
            ShapeFamily::Star => r < 0.55 + 0.45 * (5.0 * y.atan2(x)).cos(),
        }
    }
}

impl fmt::Display for ShapeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(s.as_deref().unwrap_or("?"))
    }
}

/// Everything needed to re-render a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeMeta {
    pub family: ShapeFamily,
    pub seed: u64,
    pub size: usize,
}

struct Scene {
    cx: f64,
    cy: f64,
    radius: f64,
    angle: f64,
    fg: [f64; 3],
    bg: [[f64; 3]; 2],
    bg_dir: f64,
    wave: (f64, f64, f64),
}

fn luma(c: [f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

impl Scene {
    fn sample(size: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = size as f64;
        let radius = rng.random_range(0.24..0.36) * s;
        let margin = radius * 0.9;
        let cx = rng.random_range(margin..s - margin);
        let cy = rng.random_range(margin..s - margin);
        let bg0: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9));
        let bg1: [f64; 3] = std::array::from_fn(|c| (bg0[c] + rng.random_range(-0.15..0.15)).clamp(0.05, 0.95));
        let bg_luma = 0.5 * (luma(bg0) + luma(bg1));
        // Foreground is pushed to the opposite side of mid-grey from the background.
        let fg: [f64; 3] = loop {
            let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            if (luma(c) - bg_luma).abs() >= 0.3 {
                break c;
            }
        };
        Scene {
            cx,
            cy,
            radius,
            angle: rng.random_range(0.0..2.0 * PI),
            fg,
            bg: [bg0, bg1],
            bg_dir: rng.random_range(0.0..2.0 * PI),
            wave: (
                rng.random_range(0.02..0.08),
                rng.random_range(1.0..3.0) * 2.0 * PI / s,
                rng.random_range(0.0..2.0 * PI),
            ),
        }
    }

    fn background(&self, x: f64, y: f64, size: f64, c: usize) -> f64 {
        let t = ((x - size / 2.0) * self.bg_dir.cos() + (y - size / 2.0) * self.bg_dir.sin()) / size + 0.5;
        let t = t.clamp(0.0, 1.0);
        let (amp, freq, phase) = self.wave;
        self.bg[0][c] * (1.0 - t) + self.bg[1][c] * t + amp * (freq * (x + 0.7 * y) + phase).sin()
    }
}

/// Renders one anti-aliased, slightly blurred shape over a smooth background.
pub fn render(meta: &ShapeMeta) -> ImageRgb {
    let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
    let size = meta.size;
    let scene = Scene::sample(size, &mut rng);
    let (sin, cos) = scene.angle.sin_cos();
    let n = size * size;
    let mut data = vec![0.0; 3 * n];
    let sub = SUPERSAMPLE as f64;
    for py in 0..size {
        for px in 0..size {
            let mut coverage = 0.0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = px as f64 + (sx as f64 + 0.5) / sub - scene.cx;
                    let y = py as f64 + (sy as f64 + 0.5) / sub - scene.cy;
                    let (u, v) = ((cos * x + sin * y) / scene.radius, (-sin * x + cos * y) / scene.radius);
                    if meta.family.contains(u, -v) {
                        coverage += 1.0;
                    }
                }
            }
            coverage /= sub * sub;
            let (cxp, cyp) = (px as f64 + 0.5, py as f64 + 0.5);
            for c in 0..3 {
                let bg = scene.background(cxp, cyp, size as f64, c);
                data[c * n + py * size + px] = coverage * scene.fg[c] + (1.0 - coverage) * bg;
            }
        }
    }
    lens_blur(&mut data, size);
    ImageRgb::from_planar(size, size, data).expect("rendered pixels are finite")
}

/// Separable [1, 2, 1] / 4 blur with replicated borders, standing in for optics.
fn lens_blur(data: &mut [f64], size: usize) {
    let n = size * size;
    let mut tmp = vec![0.0; n];
    for plane in data.chunks_mut(n) {
        for y in 0..size {
            for x in 0..size {
                let (l, r) = (x.saturating_sub(1), (x + 1).min(size - 1));
                tmp[y * size + x] = 0.25 * plane[y * size + l] + 0.5 * plane[y * size + x] + 0.25 * plane[y * size + r];
            }
        }
        for y in 0..size {
            let (u, d) = (y.saturating_sub(1), (y + 1).min(size - 1));
            for x in 0..size {
                plane[y * size + x] = 0.25 * tmp[u * size + x] + 0.5 * tmp[y * size + x] + 0.25 * tmp[d * size + x];
            }
        }
    }
}
