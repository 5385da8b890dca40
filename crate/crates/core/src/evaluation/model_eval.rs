//! Evaluations that run a trained bundle.

use rand::Rng;

use super::latent::{invariance_ratio, nearest_centroid_accuracy};
use super::metrics::{psnr, ssim};
use super::report::MetricTable;
use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::isp::{degrade_random, DegradationProfile, ImageRgb};
use crate::networks::{ModelBundle, NetId};

const EVAL_BATCH: usize = 32;

pub const ABLATION_ROWS: [&str; 3] = ["r0", "A(r0) no pilot", "A(r0, pilot)"];

/// Posterior means of `net` for each image, one `[1, c, h, w]` tensor per image.
pub fn encode_means(bundle: &ModelBundle, net: NetId, images: &[&ImageRgb]) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_BATCH) {
        let mean = bundle.encode(net, chunk)?.mean().clone();
        out.extend((0..chunk.len()).map(|i| mean.narrow_rows(i, 1)));
    }
    Ok(out)
}

/// Invariance ratio of `net`'s mean latents over pairs of degraded views.
pub fn latent_invariance_ratio(bundle: &ModelBundle, net: NetId, pairs: &[(ImageRgb, ImageRgb)]) -> Result<f64> {
    let first: Vec<&ImageRgb> = pairs.iter().map(|p| &p.0).collect();
    let second: Vec<&ImageRgb> = pairs.iter().map(|p| &p.1).collect();
    let a = encode_means(bundle, net, &first)?;
    let b = encode_means(bundle, net, &second)?;
    invariance_ratio(&a.into_iter().zip(b).collect::<Vec<_>>())
}

/// A degraded input with its clean reference.
#[derive(Debug, Clone)]
pub struct TestPair {
    pub degraded: ImageRgb,
    pub clean: ImageRgb,
}

/// Degrades each clean image once with `profile`.
pub fn make_test_pairs(clean: &[&ImageRgb], profile: &DegradationProfile, rng: &mut impl Rng) -> Result<Vec<TestPair>> {
    clean
        .iter()
        .map(|c| {
            Ok(TestPair {
                degraded: degrade_random(c, profile, rng)?.image,
                clean: (*c).clone(),
            })
        })
        .collect()
}

fn mean_quality(outputs: &[ImageRgb], refs: &[&ImageRgb]) -> Result<(f64, f64)> {
    if outputs.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    let (mut p, mut s) = (0.0, 0.0);
    for (o, r) in outputs.iter().zip(refs) {
        p += psnr(o, r)?;
        s += ssim(o, r)?;
    }
    let n = outputs.len() as f64;
    Ok((p / n, s / n))
}

/// Which latent the restoration decodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestorePath {
    Baseline,
    NoPilot,
    Full,
}

/// Decodes the chosen latent for every degraded input, from posterior means.
pub fn restore_batch(bundle: &ModelBundle, path: RestorePath, degraded: &[&ImageRgb]) -> Result<Vec<ImageRgb>> {
    let mut out = Vec::with_capacity(degraded.len());
    for chunk in degraded.chunks(EVAL_BATCH) {
        let r0 = bundle.encode(NetId::DirEncoder, chunk)?.mean().clone();
        let latent = match path {
            RestorePath::Baseline => r0,
            RestorePath::NoPilot => bundle.align(NetId::AlignmentNoPilot, &r0, &Tensor::zeros(r0.shape()))?,
            RestorePath::Full => {
                let pilot = bundle.encode(NetId::DfrEncoder, chunk)?.mean().clone();
                bundle.align(NetId::Alignment, &r0, &pilot)?
            }
        };
        out.extend(bundle.decode(&latent)?);
    }
    Ok(out)
}

/// Mean PSNR/SSIM of the three restoration paths, in ablation order.
pub fn ablation_report(bundle: &ModelBundle, test: &[TestPair]) -> Result<MetricTable> {
    let degraded: Vec<&ImageRgb> = test.iter().map(|t| &t.degraded).collect();
    let clean: Vec<&ImageRgb> = test.iter().map(|t| &t.clean).collect();
    let mut table = MetricTable::default();
    for (name, path) in ABLATION_ROWS
        .iter()
        .zip([RestorePath::Baseline, RestorePath::NoPilot, RestorePath::Full])
    {
        let (p, s) = mean_quality(&restore_batch(bundle, path, &degraded)?, &clean)?;
        table.push(*name, p, s);
    }
    Ok(table)
}

/// Quality of the degraded inputs, of the clean-image autoencoding through
/// the degradation-free path, and of the full restoration.
pub fn metrics_report(bundle: &ModelBundle, test: &[TestPair]) -> Result<MetricTable> {
    let degraded: Vec<&ImageRgb> = test.iter().map(|t| &t.degraded).collect();
    let clean: Vec<&ImageRgb> = test.iter().map(|t| &t.clean).collect();
    let mut table = MetricTable::default();
    let owned: Vec<ImageRgb> = degraded.iter().map(|d| (*d).clone()).collect();
    let (p, s) = mean_quality(&owned, &clean)?;
    table.push("degraded input", p, s);
    let (p, s) = mean_quality(&dfr_reconstruct(bundle, &clean)?, &clean)?;
    table.push("clean autoencoding", p, s);
    let (p, s) = mean_quality(&restore_batch(bundle, RestorePath::Full, &degraded)?, &clean)?;
    table.push("restored", p, s);
    Ok(table)
}

/// `decode(mean of encode(y))` with the degradation-free encoder.
pub fn dfr_reconstruct(bundle: &ModelBundle, images: &[&ImageRgb]) -> Result<Vec<ImageRgb>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_BATCH) {
        out.extend(bundle.decode(bundle.encode(NetId::DfrEncoder, chunk)?.mean())?);
    }
    Ok(out)
}

fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| (0..k).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0))
        .collect()
}

/// Fraction of images the task head classifies correctly, either on the
/// images themselves or on their full restoration.
pub fn classification_accuracy(
    bundle: &ModelBundle,
    images: &[&ImageRgb],
    labels: &[usize],
    via_restoration: bool,
) -> Result<f64> {
    if images.len() != labels.len() || images.is_empty() {
        return Err(Error::Input(format!("{} images vs {} labels", images.len(), labels.len())));
    }
    let mut hits = 0usize;
    for (chunk, lab) in images.chunks(EVAL_BATCH).zip(labels.chunks(EVAL_BATCH)) {
        let logits = if via_restoration {
            let restored = restore_batch(bundle, RestorePath::Full, chunk)?;
            bundle.task_forward(&restored.iter().collect::<Vec<_>>())?
        } else {
            bundle.task_forward(chunk)?
        };
        hits += argmax_rows(&logits).iter().zip(lab).filter(|(p, l)| p == l).count();
    }
    Ok(hits as f64 / images.len() as f64)
}

/// Pilot representations of many degradations of a few clean images.
#[derive(Debug, Clone)]
pub struct PilotClusters {
    /// Flattened pilot means, grouped by source image.
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Degradation-free means of the clean images.
    pub centroids: Vec<Vec<f64>>,
    pub accuracy: f64,
}

/// Degrades every clean image `per_image` times and assigns each pilot
/// representation to the nearest clean-image representation.
pub fn pilot_clustering(
    bundle: &ModelBundle,
    clean: &[&ImageRgb],
    per_image: usize,
    profile: &DegradationProfile,
    rng: &mut impl Rng,
) -> Result<PilotClusters> {
    let centroids: Vec<Vec<f64>> = encode_means(bundle, NetId::DfrEncoder, clean)?
        .into_iter()
        .map(Tensor::into_data)
        .collect();
    let mut views = Vec::with_capacity(clean.len() * per_image);
    let mut labels = Vec::with_capacity(clean.len() * per_image);
    for (i, c) in clean.iter().enumerate() {
        for _ in 0..per_image {
            views.push(degrade_random(c, profile, rng)?.image);
            labels.push(i);
        }
    }
    let points: Vec<Vec<f64>> = encode_means(bundle, NetId::DfrEncoder, &views.iter().collect::<Vec<_>>())?
        .into_iter()
        .map(Tensor::into_data)
        .collect();
    let accuracy = nearest_centroid_accuracy(&points, &labels, &centroids)?;
    Ok(PilotClusters {
        points,
        labels,
        centroids,
        accuracy,
    })
}
