//! Diagonal Gaussian posteriors over latent grids.

mod dump;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use dump::{read_latent, write_latent, LatentHeader, LatentRole};

use crate::autograd::{Tensor, Var};
use crate::error::{Error, Result};

pub const LOGVAR_MIN: f64 = -14.0;
pub const LOGVAR_MAX: f64 = 14.0;

fn check_same_shape(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("latent shapes differ: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Gaussian with independent coordinates, parameterised by mean and log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    mean: Tensor,
    logvar: Tensor,
}

impl DiagonalGaussian {
    /// Log-variances are clamped into `[LOGVAR_MIN, LOGVAR_MAX]`.
    pub fn new(mean: Tensor, logvar: Tensor) -> Result<Self> {
        check_same_shape(mean.shape(), logvar.shape())?;
        if !mean.all_finite() || logvar.data().iter().any(|v| v.is_nan()) {
            return Err(Error::Parameter("Gaussian parameters must be finite".into()));
        }
        let logvar = logvar.map(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX));
        Ok(Self { mean, logvar })
    }

    pub fn standard(shape: &[usize]) -> Self {
        Self {
            mean: Tensor::zeros(shape),
            logvar: Tensor::zeros(shape),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.mean.shape()
    }

    pub fn mean(&self) -> &Tensor {
        &self.mean
    }

    pub fn logvar(&self) -> &Tensor {
        &self.logvar
    }

    pub fn variance(&self) -> Tensor {
        self.logvar.map(f64::exp)
    }

    /// Reparameterised draw `mean + exp(logvar / 2) · ε`.
    pub fn sample(&self, rng: &mut impl Rng) -> Tensor {
        let eps = standard_normal(self.shape(), rng);
        self.sample_with(&eps)
    }

    pub fn sample_with(&self, eps: &Tensor) -> Tensor {
        let data = self
            .mean
            .data()
            .iter()
            .zip(self.logvar.data())
            .zip(eps.data())
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect();
        Tensor::new(self.shape().to_vec(), data)
    }

    /// `KL(self || N(0, I))`, summed over all coordinates.
    pub fn kl_to_standard_normal(&self) -> f64 {
        self.mean
            .data()
            .iter()
            .zip(self.logvar.data())
            .map(|(m, lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
            .sum()
    }

    /// `KL(self || other)`, summed over all coordinates.
    pub fn kl(&self, other: &DiagonalGaussian) -> Result<f64> {
        check_same_shape(self.shape(), other.shape())?;
        let mut total = 0.0;
        for i in 0..self.mean.numel() {
            let (m1, l1) = (self.mean.data()[i], self.logvar.data()[i]);
            let (m2, l2) = (other.mean.data()[i], other.logvar.data()[i]);
            total += 0.5 * ((l1 - l2).exp() + (m2 - m1).powi(2) * (-l2).exp() - 1.0 + l2 - l1);
        }
        Ok(total)
    }

    /// Product of experts: precisions add, means are precision-weighted.
    pub fn poe(&self, other: &DiagonalGaussian) -> Result<DiagonalGaussian> {
        check_same_shape(self.shape(), other.shape())?;
        let n = self.mean.numel();
        let (mut mean, mut logvar) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let (m1, l1) = (self.mean.data()[i], self.logvar.data()[i]);
            let (m2, l2) = (other.mean.data()[i], other.logvar.data()[i]);
            let (w1, w2) = (sigmoid(l2 - l1), sigmoid(l1 - l2));
            mean.push(w1 * m1 + w2 * m2);
            logvar.push(l1 - crate::autograd::softplus(l1 - l2));
        }
        DiagonalGaussian::new(
            Tensor::new(self.shape().to_vec(), mean),
            Tensor::new(self.shape().to_vec(), logvar),
        )
    }

    /// Moment-matched Gaussian of the equal-weight mixture of the rows, shape `[1, ...]`.
    pub fn aggregate(&self) -> Result<DiagonalGaussian> {
        let n = self.shape()[0];
        let per = self.mean.numel() / n;
        let mut shape = self.shape().to_vec();
        shape[0] = 1;
        let (mut mean, mut logvar) = (vec![0.0; per], vec![0.0; per]);
        for j in 0..per {
            let m = (0..n).map(|i| self.mean.data()[i * per + j]).sum::<f64>() / n as f64;
            let v = (0..n)
                .map(|i| self.logvar.data()[i * per + j].exp() + (self.mean.data()[i * per + j] - m).powi(2))
                .sum::<f64>()
                / n as f64;
            mean[j] = m;
            logvar[j] = v.ln();
        }
        DiagonalGaussian::new(Tensor::new(shape.clone(), mean), Tensor::new(shape, logvar))
    }

    /// Splits a batched Gaussian `[n, ...]` into its rows.
    pub fn rows(&self) -> Vec<DiagonalGaussian> {
        let n = self.shape()[0];
        (0..n)
            .map(|i| DiagonalGaussian {
                mean: self.mean.narrow_rows(i, 1),
                logvar: self.logvar.narrow_rows(i, 1),
            })
            .collect()
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn standard_normal(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| StandardNormal.sample(rng)).collect())
}

/// A diagonal Gaussian whose parameters live on an autodiff graph.
#[derive(Clone, Copy)]
pub struct GaussianVar<'g> {
    pub mean: Var<'g>,
    pub logvar: Var<'g>,
}

impl<'g> GaussianVar<'g> {
    pub fn new(mean: Var<'g>, logvar: Var<'g>) -> Self {
        Self { mean, logvar }
    }

    pub fn value(&self) -> Result<DiagonalGaussian> {
        DiagonalGaussian::new(self.mean.tensor(), self.logvar.tensor())
    }

    /// Reparameterised sample with externally drawn noise `eps`.
    pub fn sample_with(&self, eps: &Tensor) -> Var<'g> {
        let g = self.mean.graph();
        self.mean + self.logvar.scale(0.5).exp() * g.constant(eps.clone())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Var<'g> {
        let eps = standard_normal(&self.mean.shape(), rng);
        self.sample_with(&eps)
    }

    /// Summed `KL(self || N(0, I))`.
    pub fn kl_to_standard_normal(&self) -> Var<'g> {
        (self.logvar.exp() + self.mean.square() - self.logvar)
            .offset(-1.0)
            .sum()
            .scale(0.5)
    }

    /// Summed `KL(self || other)`.
    pub fn kl(&self, other: &GaussianVar<'g>) -> Result<Var<'g>> {
        check_same_shape(&self.mean.shape(), &other.mean.shape())?;
        let diff = self.logvar - other.logvar;
        let term = diff.exp() + (other.mean - self.mean).square() * other.logvar.scale(-1.0).exp() - diff;
        Ok(term.offset(-1.0).sum().scale(0.5))
    }

    /// Moment-matched Gaussian of the equal-weight mixture of the rows, shape `[1, ...]`.
    pub fn aggregate(&self) -> GaussianVar<'g> {
        let n = self.mean.shape()[0];
        let row = |v: Var<'g>, i: usize| v.narrow_rows(i, 1);
        let sum_rows = |f: &dyn Fn(usize) -> Var<'g>| (1..n).fold(f(0), |acc, i| acc + f(i));
        let mean = sum_rows(&|i| row(self.mean, i)).scale(1.0 / n as f64);
        let var = sum_rows(&|i| row(self.logvar, i).exp() + (row(self.mean, i) - mean).square()).scale(1.0 / n as f64);
        GaussianVar {
            mean,
            logvar: var.ln(),
        }
    }

    /// Product of experts, written in a form that stays finite for any log-variances.
    pub fn poe(&self, other: &GaussianVar<'g>) -> Result<GaussianVar<'g>> {
        check_same_shape(&self.mean.shape(), &other.mean.shape())?;
        let w1 = (other.logvar - self.logvar).sigmoid();
        let w2 = (self.logvar - other.logvar).sigmoid();
        let mean = w1 * self.mean + w2 * other.mean;
        let logvar = self.logvar - (self.logvar - other.logvar).softplus();
        Ok(GaussianVar { mean, logvar })
    }
}
