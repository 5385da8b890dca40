//! Procedural labelled shapes and ingestion of PNG folders.

mod shapes;

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use shapes::{render, ShapeFamily, ShapeMeta, MAX_CLASSES};

use crate::error::{Error, Result};
use crate::isp::ImageRgb;

pub const PATCH_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub id: String,
    pub clean: ImageRgb,
    pub label: usize,
    pub meta: ShapeMeta,
}

impl ToySample {
    pub fn regenerate(id: impl Into<String>, meta: ShapeMeta) -> Self {
        ToySample {
            id: id.into(),
            clean: render(&meta),
            label: ShapeFamily::ALL.iter().position(|f| *f == meta.family).expect("known family"),
            meta,
        }
    }
}

/// `n` 64×64 samples cycling through the first `n_classes` shape families.
pub fn gen_toy_corpus(n: usize, n_classes: usize, seed: u64) -> Result<Vec<ToySample>> {
    gen_toy_corpus_sized(n, n_classes, PATCH_SIZE, seed)
}

pub fn gen_toy_corpus_sized(n: usize, n_classes: usize, size: usize, seed: u64) -> Result<Vec<ToySample>> {
    if !(2..=MAX_CLASSES).contains(&n_classes) {
        return Err(Error::Parameter(format!("n_classes must be in [2, {MAX_CLASSES}], got {n_classes}")));
    }
    if size < 8 {
        return Err(Error::Parameter(format!("image size {size} too small")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let meta = ShapeMeta {
                family: ShapeFamily::ALL[i % n_classes],
                seed: rng.random(),
                size,
            };
            ToySample::regenerate(format!("toy_{i:05}"), meta)
        })
        .collect())
}

/// One row of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub label: usize,
    pub seed: u64,
    pub file: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes each sample as `<id>.png` plus a manifest.
pub fn write_corpus(dir: &Path, samples: &[ToySample]) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let file = format!("{}.png", s.id);
        s.clean.save_png8(&dir.join(&file))?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            label: s.label,
            seed: s.meta.seed,
            file,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&entries)?).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}

/// A labelled image read back from a manifest.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub id: String,
    pub label: usize,
    pub image: ImageRgb,
}

pub fn read_corpus(dir: &Path) -> Result<Vec<LabeledImage>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    if entries.is_empty() {
        return Err(Error::Input(format!("{} lists no images", path.display())));
    }
    entries
        .into_iter()
        .map(|e| {
            Ok(LabeledImage {
                image: ImageRgb::load_png(&dir.join(&e.file))?,
                id: e.id,
                label: e.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Patch {
    pub source: PathBuf,
    pub image: ImageRgb,
}

/// Crops `crops_per_image` patches of `size × size` from every PNG in `dir`
/// (sorted by file name). The first crop of each image is centred, the rest
/// are placed at random, seeded per file. Unreadable or too-small files are
/// skipped with a warning.
pub fn load_folder(dir: &Path, crops_per_image: usize, size: usize, seed: u64) -> Result<Vec<Patch>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    let mut patches = Vec::new();
    for (fi, file) in files.iter().enumerate() {
        let img = match ImageRgb::load_png(file) {
            Ok(img) => img,
            Err(e) => {
                warn!("skipping {}: {e}", file.display());
                continue;
            }
        };
        if img.height() < size || img.width() < size {
            warn!("skipping {}: smaller than {size}x{size}", file.display());
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (fi as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for k in 0..crops_per_image {
            let (top, left) = if k == 0 {
                ((img.height() - size) / 2, (img.width() - size) / 2)
            } else {
                (rng.random_range(0..=img.height() - size), rng.random_range(0..=img.width() - size))
            };
            patches.push(Patch {
                source: file.clone(),
                image: img.crop(top, left, size, size)?,
            });
        }
    }
    if patches.is_empty() {
        return Err(Error::Input(format!("no usable PNG images in {}", dir.display())));
    }
    Ok(patches)
}
