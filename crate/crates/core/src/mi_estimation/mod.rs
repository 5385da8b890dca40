//! Variational mutual-information bounds.
//!
//! The lower bound is the Jensen-Shannon estimator
//! `E_joint[-sp(-F)] - E_marginal[sp(F)]` with `sp` the softplus; its value for
//! a constant-zero critic is `-2 ln 2`. The conditional-information upper
//! bound is a KL divergence between a two-view posterior and a single-view one.

mod vector_critic;

use rand::Rng;

pub use crate::autograd::softplus;
pub use vector_critic::{correlated_gaussian, estimate_jsd_mi, JsdFitConfig, VectorCritic};

use crate::autograd::Var;
use crate::distributions::{DiagonalGaussian, GaussianVar};
use crate::error::{Error, Result};

/// Critic scores on paired (joint) and shuffled (marginal) samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticBatch {
    joint: Vec<f64>,
    marginal: Vec<f64>,
}

impl CriticBatch {
    pub fn new(joint: Vec<f64>, marginal: Vec<f64>) -> Result<Self> {
        if joint.len() < 2 || marginal.len() < 2 {
            return Err(Error::Batch(format!(
                "critic batch needs at least 2 scores per side, got {} and {}",
                joint.len(),
                marginal.len()
            )));
        }
        if joint.iter().chain(&marginal).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("critic scores must be finite".into()));
        }
        Ok(Self { joint, marginal })
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }
}

pub fn jsd_mi_lower_bound(batch: &CriticBatch) -> f64 {
    let pos = batch.joint.iter().map(|&f| -softplus(-f)).sum::<f64>() / batch.joint.len() as f64;
    let neg = batch.marginal.iter().map(|&f| softplus(f)).sum::<f64>() / batch.marginal.len() as f64;
    pos - neg
}

/// Differentiable form of [`jsd_mi_lower_bound`].
pub fn jsd_bound<'g>(joint: Var<'g>, marginal: Var<'g>) -> Var<'g> {
    let pos = joint.scale(-1.0).softplus().mean();
    let neg = marginal.softplus().mean();
    -(pos + neg)
}

/// A uniformly random cyclic permutation (Sattolo): no index maps to itself.
pub fn derangement(n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::Batch(format!("shuffled pairing needs at least 2 items, got {n}")));
    }
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    Ok(p)
}

/// Reorders `items` by a [`derangement`], so every item changes position.
pub fn shuffle_pairing<T: Clone>(items: &[T], rng: &mut impl Rng) -> Result<Vec<T>> {
    Ok(derangement(items.len(), rng)?.into_iter().map(|i| items[i].clone()).collect())
}

/// `KL(joint || conditional)`, the inner term of the conditional-MI upper bound.
pub fn cmi_upper_bound(joint: &DiagonalGaussian, conditional: &DiagonalGaussian) -> Result<f64> {
    joint.kl(conditional)
}

/// Average KL from the joint posterior to each single-view posterior.
pub fn d_akl(joint: &DiagonalGaussian, cond1: &DiagonalGaussian, cond2: &DiagonalGaussian) -> Result<f64> {
    Ok(0.5 * (cmi_upper_bound(joint, cond1)? + cmi_upper_bound(joint, cond2)?))
}

pub fn d_akl_var<'g>(joint: &GaussianVar<'g>, cond1: &GaussianVar<'g>, cond2: &GaussianVar<'g>) -> Result<Var<'g>> {
    Ok((joint.kl(cond1)? + joint.kl(cond2)?).scale(0.5))
}
