use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Planar RGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    height: usize,
    width: usize,
    /// Channel-major: `data[(c * height + y) * width + x]`.
    data: Vec<f64>,
}

impl ImageRgb {
    /// Builds an image from planar data, clamping into `[0, 1]`.
    pub fn from_planar(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!("empty image {height}x{width}")));
        }
        if data.len() != 3 * height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width} RGB image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite pixel value {v}")));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(3 * height * width);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::from_planar(height, width, data).expect("from_fn produced invalid pixels")
    }

    pub fn uniform(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        Self::from_fn(height, width, |_, _, c| rgb[c])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn max_abs_diff(&self, other: &ImageRgb) -> f64 {
        assert_eq!((self.height, self.width), (other.height, other.width));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `[1, 3, h, w]` tensor view of the pixels.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, 3, self.height, self.width], self.data.clone())
    }

    /// Stacks images into one `[n, 3, h, w]` batch.
    pub fn batch(images: &[&ImageRgb]) -> Result<Tensor> {
        let first = images
            .first()
            .ok_or_else(|| Error::Batch("empty image batch".into()))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(images.len() * 3 * h * w);
        for img in images {
            if (img.height, img.width) != (h, w) {
                return Err(Error::Dimension(format!(
                    "batch mixes {h}x{w} and {}x{}",
                    img.height, img.width
                )));
            }
            data.extend_from_slice(&img.data);
        }
        Ok(Tensor::new(vec![images.len(), 3, h, w], data))
    }

    /// Splits a `[n, 3, h, w]` tensor back into images, clamping into `[0, 1]`.
    pub fn unbatch(t: &Tensor) -> Result<Vec<ImageRgb>> {
        if t.shape().len() != 4 || t.shape()[1] != 3 {
            return Err(Error::Dimension(format!("expected [n, 3, h, w], got {:?}", t.shape())));
        }
        let (n, _, h, w) = t.dims4();
        (0..n)
            .map(|s| ImageRgb::from_planar(h, w, t.data()[s * 3 * h * w..(s + 1) * 3 * h * w].to_vec()))
            .collect()
    }

    /// Crops `height × width` starting at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::Dimension(format!(
                "crop {height}x{width}+{top}+{left} outside {}x{}",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(height, width, |y, x, c| self.get(top + y, left + x, c)))
    }

    /// Loads an 8- or 16-bit PNG, normalised to `[0, 1]`.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let sixteen = matches!(
            img,
            DynamicImage::ImageLuma16(_)
                | DynamicImage::ImageLumaA16(_)
                | DynamicImage::ImageRgb16(_)
                | DynamicImage::ImageRgba16(_)
        );
        let mut data = vec![0.0; 3 * h * w];
        if sixteen {
            let buf = img.to_rgb16();
            for (x, y, px) in buf.enumerate_pixels() {
                for c in 0..3 {
                    data[(c * h + y as usize) * w + x as usize] = px[c] as f64 / 65535.0;
                }
            }
        } else {
            let buf = img.to_rgb8();
            for (x, y, px) in buf.enumerate_pixels() {
                for c in 0..3 {
                    data[(c * h + y as usize) * w + x as usize] = px[c] as f64 / 255.0;
                }
            }
        }
        Self::from_planar(h, w, data)
    }

    pub fn save_png8(&self, path: &Path) -> Result<()> {
        let buf = ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            Rgb([0, 1, 2].map(|c| (self.get(y as usize, x as usize, c) * 255.0).round() as u8))
        });
        buf.save(path)?;
        Ok(())
    }

    pub fn save_png16(&self, path: &Path) -> Result<()> {
        let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
            ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
                Rgb([0, 1, 2].map(|c| (self.get(y as usize, x as usize, c) * 65535.0).round() as u16))
            });
        buf.save(path)?;
        Ok(())
    }
}

/// Colour sampled at a photosite of the fixed RGGB mosaic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfaColor {
    Red,
    Green,
    Blue,
}

impl CfaColor {
    pub fn channel(self) -> usize {
        match self {
            CfaColor::Red => 0,
            CfaColor::Green => 1,
            CfaColor::Blue => 2,
        }
    }
}

/// RGGB: red at (even, even), blue at (odd, odd), green elsewhere.
#[inline]
pub fn cfa_color(y: usize, x: usize) -> CfaColor {
    match (y % 2, x % 2) {
        (0, 0) => CfaColor::Red,
        (1, 1) => CfaColor::Blue,
        _ => CfaColor::Green,
    }
}

/// Single-channel RGGB mosaic with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BayerRaw {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl BayerRaw {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || !height.is_multiple_of(2) || !width.is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "Bayer mosaic needs even, non-zero dimensions, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width} mosaic",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::Parameter("mosaic values must be finite and in [0, 1]".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub(crate) fn from_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Self {
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Persists as a 16-bit single-channel PNG.
    pub fn save_png16(&self, path: &Path) -> Result<()> {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
                Luma([(self.get(y as usize, x as usize) * 65535.0).round() as u16])
            });
        buf.save(path)?;
        Ok(())
    }

    pub fn load_png16(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_luma16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.pixels().map(|p| p[0] as f64 / 65535.0).collect();
        Self::new(h, w, data)
    }
}
