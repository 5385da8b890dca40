//! Python module `dirlearn`: images, camera degradations, Gaussian helpers,
//! gradient checks, training and evaluation of checkpoints.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dirlearn::autograd::Tensor;
use dirlearn::corpus::{gen_toy_corpus, LabeledImage};
use dirlearn::distributions::DiagonalGaussian;
use dirlearn::evaluation::{self, RestorePath};
use dirlearn::isp::{self, DegradationProfile, DegradedView, ImageRgb};
use dirlearn::mi_estimation::{jsd_mi_lower_bound, CriticBatch};
use dirlearn::networks::{load_checkpoint, ModelBundle, ModelConfig, NetId};
use dirlearn::training::{self, LossName, Stage1Config, Stage2Config, StageOutput};
use dirlearn::Error;

fn py_err(e: Error) -> PyErr {
    let msg = format!("[{}] {e}", e.kind());
    match e {
        Error::Io { .. } | Error::Image(_) => PyIOError::new_err(msg),
        Error::FrozenViolation(_) | Error::NonFinite { .. } | Error::Checkpoint(_) | Error::Csv(_) => {
            PyRuntimeError::new_err(msg)
        }
        _ => PyValueError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for dirlearn::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(text: Option<&str>) -> PyResult<T> {
    match text {
        None => Ok(T::default()),
        Some(t) => serde_json::from_str(t).map_err(|e| PyValueError::new_err(format!("bad config: {e}"))),
    }
}

fn profile(name: &str) -> PyResult<DegradationProfile> {
    name.parse().py()
}

/// Planar RGB image with values in [0, 1].
#[pyclass(name = "Image", frozen)]
pub struct PyImage {
    inner: ImageRgb,
}

impl PyImage {
    fn wrap(inner: ImageRgb) -> Self {
        PyImage { inner }
    }
}

fn refs<'a>(images: &'a [PyRef<'_, PyImage>]) -> Vec<&'a ImageRgb> {
    images.iter().map(|i| &i.inner).collect()
}

#[pymethods]
impl PyImage {
    /// `data` is channel-major: all red values row by row, then green, then blue.
    #[new]
    fn new(height: usize, width: usize, data: Vec<f64>) -> PyResult<Self> {
        ImageRgb::from_planar(height, width, data).py().map(Self::wrap)
    }

    #[staticmethod]
    fn uniform(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        Self::wrap(ImageRgb::uniform(height, width, rgb))
    }

    #[staticmethod]
    fn load_png(path: PathBuf) -> PyResult<Self> {
        ImageRgb::load_png(&path).py().map(Self::wrap)
    }

    fn save_png(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_png8(&path).py()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.inner.height(), self.inner.width())
    }
}

fn view_to_py<'py>(py: Python<'py>, v: DegradedView) -> PyResult<(PyImage, Bound<'py, PyAny>)> {
    Ok((PyImage::wrap(v.image), json_to_py(py, &v.params)?))
}

/// One random degradation; returns the image and the sampled ISP parameters.
#[pyfunction]
#[pyo3(signature = (image, profile_name = "default", seed = 0))]
fn degrade<'py>(
    py: Python<'py>,
    image: PyRef<'_, PyImage>,
    profile_name: &str,
    seed: u64,
) -> PyResult<(PyImage, Bound<'py, PyAny>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let view = isp::degrade_random(&image.inner, &profile(profile_name)?, &mut rng).py()?;
    view_to_py(py, view)
}

/// Two independent degradations of the same image.
#[pyfunction]
#[pyo3(signature = (image, profile_name = "default", seed = 0))]
#[allow(clippy::type_complexity)]
fn make_pair<'py>(
    py: Python<'py>,
    image: PyRef<'_, PyImage>,
    profile_name: &str,
    seed: u64,
) -> PyResult<((PyImage, Bound<'py, PyAny>), (PyImage, Bound<'py, PyAny>))> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = isp::make_pair(&image.inner, &profile(profile_name)?, &mut rng).py()?;
    Ok((view_to_py(py, a)?, view_to_py(py, b)?))
}

/// Labelled toy shapes as `(id, label, Image)` tuples.
#[pyfunction]
#[pyo3(signature = (n, n_classes = 4, seed = 0))]
fn toy_corpus(n: usize, n_classes: usize, seed: u64) -> PyResult<Vec<(String, usize, PyImage)>> {
    let samples = gen_toy_corpus(n, n_classes, seed).py()?;
    Ok(samples.into_iter().map(|s| (s.id, s.label, PyImage::wrap(s.clean))).collect())
}

#[pyfunction]
fn psnr(a: PyRef<'_, PyImage>, b: PyRef<'_, PyImage>) -> PyResult<f64> {
    evaluation::psnr(&a.inner, &b.inner).py()
}

#[pyfunction]
fn ssim(a: PyRef<'_, PyImage>, b: PyRef<'_, PyImage>) -> PyResult<f64> {
    evaluation::ssim(&a.inner, &b.inner).py()
}

fn gaussian(mean: Vec<f64>, logvar: Vec<f64>) -> PyResult<DiagonalGaussian> {
    let n = mean.len();
    DiagonalGaussian::new(Tensor::new(vec![n], mean), Tensor::new(vec![logvar.len()], logvar)).py()
}

/// KL(N(m1, e^lv1) || N(m2, e^lv2)) for diagonal Gaussians, summed over elements.
#[pyfunction]
fn gaussian_kl(m1: Vec<f64>, lv1: Vec<f64>, m2: Vec<f64>, lv2: Vec<f64>) -> PyResult<f64> {
    gaussian(m1, lv1)?.kl(&gaussian(m2, lv2)?).py()
}

/// Product of two diagonal Gaussians; returns `(mean, logvar)`.
#[pyfunction]
fn poe(m1: Vec<f64>, lv1: Vec<f64>, m2: Vec<f64>, lv2: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let p = gaussian(m1, lv1)?.poe(&gaussian(m2, lv2)?).py()?;
    Ok((p.mean().data().to_vec(), p.logvar().data().to_vec()))
}

/// Jensen-Shannon mutual-information lower bound from critic scores.
#[pyfunction]
fn jsd_bound(joint: Vec<f64>, marginal: Vec<f64>) -> PyResult<f64> {
    Ok(jsd_mi_lower_bound(&CriticBatch::new(joint, marginal).py()?))
}

/// Finite-difference check of one training loss on miniature networks.
#[pyfunction]
#[pyo3(signature = (loss = "loss_dir", tolerance = 1e-4, seed = 0))]
fn grad_check<'py>(py: Python<'py>, loss: &str, tolerance: f64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let name: LossName = loss.parse().py()?;
    let bundle = training::miniature_bundle(seed).py()?;
    let report = training::grad_check(name, &bundle, tolerance, seed).py()?;
    let summary = serde_json::json!({
        "loss": report.loss.to_string(),
        "max_rel_error": report.max_rel_error,
        "n_checked": report.n_checked,
        "tolerance": report.tolerance,
        "passed": report.passed(),
    });
    json_to_py(py, &summary)
}

fn restore_path(name: &str) -> PyResult<RestorePath> {
    match name {
        "baseline" => Ok(RestorePath::Baseline),
        "no_pilot" => Ok(RestorePath::NoPilot),
        "full" => Ok(RestorePath::Full),
        other => Err(PyValueError::new_err(format!(
            "unknown restoration path `{other}` (baseline, no_pilot, full)"
        ))),
    }
}

/// All networks of the model, from a fresh init or a checkpoint.
#[pyclass(name = "Model")]
pub struct PyModel {
    bundle: ModelBundle,
}

#[pymethods]
impl PyModel {
    /// `config` is a JSON object of model settings; omitted keys keep their defaults.
    #[new]
    #[pyo3(signature = (config = None))]
    fn new(config: Option<&str>) -> PyResult<Self> {
        let cfg: ModelConfig = parse_json(config)?;
        Ok(PyModel {
            bundle: ModelBundle::new(&cfg).py()?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (bundle, _) = load_checkpoint(&path).py()?;
        Ok(PyModel { bundle })
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.bundle.config)
    }

    /// Posterior means of one encoder, one flat list per image.
    #[pyo3(signature = (images, net = "dir_encoder"))]
    fn encode(&self, images: Vec<PyRef<'_, PyImage>>, net: &str) -> PyResult<Vec<Vec<f64>>> {
        let net: NetId = net.parse().py()?;
        let means = evaluation::encode_means(&self.bundle, net, &refs(&images)).py()?;
        Ok(means.into_iter().map(|t| t.data().to_vec()).collect())
    }

    #[pyo3(signature = (images, path = "full"))]
    fn restore(&self, images: Vec<PyRef<'_, PyImage>>, path: &str) -> PyResult<Vec<PyImage>> {
        let out = evaluation::restore_batch(&self.bundle, restore_path(path)?, &refs(&images)).py()?;
        Ok(out.into_iter().map(PyImage::wrap).collect())
    }

    /// Task-head accuracy on the images, optionally after full restoration.
    #[pyo3(signature = (images, labels, via_restoration = false))]
    fn accuracy(&self, images: Vec<PyRef<'_, PyImage>>, labels: Vec<usize>, via_restoration: bool) -> PyResult<f64> {
        evaluation::classification_accuracy(&self.bundle, &refs(&images), &labels, via_restoration).py()
    }

    /// Mean distance between latents of paired views over the mean distance of unpaired ones.
    #[pyo3(signature = (first, second, net = "dir_encoder"))]
    fn invariance_ratio(
        &self,
        first: Vec<PyRef<'_, PyImage>>,
        second: Vec<PyRef<'_, PyImage>>,
        net: &str,
    ) -> PyResult<f64> {
        let net: NetId = net.parse().py()?;
        let pairs: Vec<(ImageRgb, ImageRgb)> = first
            .iter()
            .zip(&second)
            .map(|(a, b)| (a.inner.clone(), b.inner.clone()))
            .collect();
        evaluation::latent_invariance_ratio(&self.bundle, net, &pairs).py()
    }

    fn checksum(&self, net: &str) -> PyResult<String> {
        self.bundle.checksum(net).py()
    }
}

fn summary<'py>(py: Python<'py>, out: &StageOutput) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::json!({
        "checkpoint": out.checkpoint,
        "metrics": out.metrics,
        "epochs_done": out.epochs_done,
        "step": out.step,
    });
    json_to_py(py, &s)
}

/// Stage I on clean images; `model` and `config` are JSON objects.
#[pyfunction]
#[pyo3(signature = (images, out_dir, model = None, config = None, resume = false))]
fn train_stage1<'py>(
    py: Python<'py>,
    images: Vec<PyRef<'_, PyImage>>,
    out_dir: PathBuf,
    model: Option<&str>,
    config: Option<&str>,
    resume: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let model: ModelConfig = parse_json(model)?;
    let cfg: Stage1Config = parse_json(config)?;
    let out = training::train_stage1(&refs(&images), &model, &cfg, &out_dir, resume).py()?;
    summary(py, &out)
}

/// Stage II from a stage-1 checkpoint; `config` is a JSON object.
#[pyfunction]
#[pyo3(signature = (images, labels, stage1_checkpoint, out_dir, config = None, resume = false))]
fn train_stage2<'py>(
    py: Python<'py>,
    images: Vec<PyRef<'_, PyImage>>,
    labels: Vec<usize>,
    stage1_checkpoint: PathBuf,
    out_dir: PathBuf,
    config: Option<&str>,
    resume: bool,
) -> PyResult<Bound<'py, PyAny>> {
    if images.len() != labels.len() {
        return Err(PyValueError::new_err(format!("{} images vs {} labels", images.len(), labels.len())));
    }
    let cfg: Stage2Config = parse_json(config)?;
    let samples: Vec<LabeledImage> = images
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (img, &label))| LabeledImage {
            id: format!("{i:05}"),
            label,
            image: img.inner.clone(),
        })
        .collect();
    let sample_refs: Vec<&LabeledImage> = samples.iter().collect();
    let out = training::train_stage2(&sample_refs, &stage1_checkpoint, &cfg, &out_dir, resume).py()?;
    summary(py, &out)
}

#[pymodule]
#[pyo3(name = "dirlearn")]
fn dirlearn_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(make_pair, m)?)?;
    m.add_function(wrap_pyfunction!(toy_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_kl, m)?)?;
    m.add_function(wrap_pyfunction!(poe, m)?)?;
    m.add_function(wrap_pyfunction!(jsd_bound, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(train_stage1, m)?)?;
    m.add_function(wrap_pyfunction!(train_stage2, m)?)?;
    Ok(())
}
