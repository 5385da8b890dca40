//! Camera ISP simulation and synthetic degradation.
//!
//! The forward pipeline develops an RGGB mosaic into RGB (bilinear demosaic,
//! white balance, colour correction, gamma). Its pointwise stages invert
//! exactly, which lets clean RGB images be pushed back to RAW, corrupted with
//! sensor noise, re-developed with randomised settings and JPEG-quantised.

mod degrade;
mod image;
mod jpeg;
mod noise;
mod params;
mod stages;

pub use self::image::{cfa_color, BayerRaw, CfaColor, ImageRgb};
pub use degrade::{degrade, degrade_random, make_pair, DegradedView};
pub use jpeg::{jpeg_quantize, scaled_table};
pub use noise::{add_sensor_noise, sensor_noise_unclipped};
pub use params::{sample_params, DegradationProfile, IspParams, Range, GAMMA_RANGE, WB_GAIN_RANGE};
pub use stages::{apply_forward_isp, apply_inverse_isp, demosaic_bilinear, gamma_decode, gamma_encode, mosaic};
