//! The three training objectives.
//!
//! KL terms and L1 distances are averaged over batch and elements, matching
//! the per-pixel mean absolute reconstruction error.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::autograd::{Graph, Tensor, Var};
use crate::distributions::{standard_normal, GaussianVar};
use crate::error::{Error, Result};
use crate::mi_estimation::{d_akl_var, derangement, jsd_bound};
use crate::networks::{Alignment, ModelBundle, NetId};
use crate::nn::Bound;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossPart {
    MiX1,
    MiX2,
    MiY,
    DAkl,
    PriorKl,
    Recon,
    LatentL1,
    Task,
}

impl LossPart {
    pub const ALL: [LossPart; 8] = [
        LossPart::MiX1,
        LossPart::MiX2,
        LossPart::MiY,
        LossPart::DAkl,
        LossPart::PriorKl,
        LossPart::Recon,
        LossPart::LatentL1,
        LossPart::Task,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossPart::MiX1 => "mi_x1",
            LossPart::MiX2 => "mi_x2",
            LossPart::MiY => "mi_y",
            LossPart::DAkl => "d_akl",
            LossPart::PriorKl => "prior_kl",
            LossPart::Recon => "recon",
            LossPart::LatentL1 => "latent_l1",
            LossPart::Task => "task",
        }
    }
}

impl fmt::Display for LossPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartValue {
    pub part: LossPart,
    pub value: f64,
    pub weight: f64,
}

/// Scalar loss with its weighted components.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossReport {
    pub total: f64,
    pub parts: Vec<PartValue>,
}

impl LossReport {
    pub fn get(&self, part: LossPart) -> Option<f64> {
        self.parts.iter().find(|p| p.part == part).map(|p| p.value)
    }

    /// `Σ weight · value`, which reproduces `total`.
    pub fn weighted_sum(&self) -> f64 {
        self.parts.iter().map(|p| p.weight * p.value).sum()
    }

    /// First non-finite component (or the total), for diagnostics.
    pub fn non_finite_part(&self) -> Option<String> {
        if let Some(p) = self.parts.iter().find(|p| !p.value.is_finite()) {
            return Some(p.part.to_string());
        }
        (!self.total.is_finite()).then(|| "total".to_string())
    }
}

/// A loss recorded on a graph together with its report.
pub struct GraphLoss<'g> {
    pub total: Var<'g>,
    pub report: LossReport,
}

struct Terms<'g>(Vec<(LossPart, Var<'g>, f64)>);

impl<'g> Terms<'g> {
    fn finish(self) -> GraphLoss<'g> {
        let mut total: Option<Var<'g>> = None;
        let mut parts = Vec::new();
        for (part, v, w) in self.0 {
            parts.push(PartValue {
                part,
                value: v.item(),
                weight: w,
            });
            if w != 0.0 {
                let t = v.scale(w);
                total = Some(match total {
                    Some(acc) => acc + t,
                    None => t,
                });
            }
        }
        let total = total.expect("at least one weighted term");
        GraphLoss {
            report: LossReport {
                total: total.item(),
                parts,
            },
            total,
        }
    }
}

/// Noise consumed by one evaluation of a stochastic loss.
#[derive(Debug, Clone)]
pub struct LossNoise {
    pub eps: Tensor,
    pub perm: Vec<usize>,
}

impl LossNoise {
    pub fn draw(latent_shape: &[usize], rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            eps: standard_normal(latent_shape, rng),
            perm: derangement(latent_shape[0], rng)?,
        })
    }
}

/// Weights of the two-view objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirWeights {
    pub lambda: f64,
    pub beta: f64,
}

fn batch_of(x: &Tensor) -> Result<usize> {
    if x.shape().len() != 4 {
        return Err(Error::Dimension(format!("expected an image batch, got {:?}", x.shape())));
    }
    Ok(x.shape()[0])
}

fn mean_kl<'g>(kl_sum: Var<'g>, numel: usize) -> Var<'g> {
    kl_sum.scale(1.0 / numel as f64)
}

/// Two-view objective: JSD bounds between each view and the joint-posterior
/// sample, the averaged KL redundancy bound, and a weak prior KL.
pub fn dir_objective<'g>(
    g: &'g Graph,
    bundle: &ModelBundle,
    encoder: &Bound<'g>,
    critic: &Bound<'g>,
    x1: &Tensor,
    x2: &Tensor,
    w: DirWeights,
    noise: &LossNoise,
) -> Result<GraphLoss<'g>> {
    let n = batch_of(x1)?;
    if x1.shape() != x2.shape() {
        return Err(Error::Dimension(format!("views differ: {:?} vs {:?}", x1.shape(), x2.shape())));
    }
    let both = g.constant(Tensor::cat_rows(&[x1, x2]));
    let post = bundle.dir_encoder.forward(encoder, both)?;
    let p1 = GaussianVar::new(post.mean.narrow_rows(0, n), post.logvar.narrow_rows(0, n));
    let p2 = GaussianVar::new(post.mean.narrow_rows(n, n), post.logvar.narrow_rows(n, n));
    let joint = p1.poe(&p2)?;
    if noise.eps.shape() != joint.mean.shape().as_slice() {
        return Err(Error::Dimension("noise shape does not match the latent".into()));
    }
    let r = joint.sample_with(&noise.eps);
    let numel = noise.eps.numel();

    let feats = bundle.critic.image_features(critic, both);
    let lat = bundle.critic.latent_features(critic, r);
    let mut mi = Vec::with_capacity(2);
    for start in [0, n] {
        let f = feats.narrow_rows(start, n);
        let pos = bundle.critic.score(critic, f, lat);
        let neg = bundle.critic.score(critic, f.select_rows(&noise.perm), lat);
        mi.push(jsd_bound(pos, neg));
    }
    let dakl = mean_kl(d_akl_var(&joint, &p1, &p2)?, numel);
    let prior = mean_kl(joint.aggregate().kl_to_standard_normal(), numel / n);
    Ok(Terms(vec![
        (LossPart::MiX1, mi[0], -0.5),
        (LossPart::MiX2, mi[1], -0.5),
        (LossPart::DAkl, dakl, w.lambda),
        (LossPart::PriorKl, prior, w.beta),
    ])
    .finish())
}

/// Degradation-free objective: JSD bound between clean image and its latent
/// sample, L1 reconstruction through the decoder, prior KL weighted by `beta_star`.
#[allow(clippy::too_many_arguments)]
pub fn dfr_objective<'g>(
    g: &'g Graph,
    bundle: &ModelBundle,
    encoder: &Bound<'g>,
    decoder: &Bound<'g>,
    critic: &Bound<'g>,
    y: &Tensor,
    beta_star: f64,
    noise: &LossNoise,
) -> Result<GraphLoss<'g>> {
    let batch = batch_of(y)?;
    let yv = g.constant(y.clone());
    let post = bundle.dfr_encoder.forward(encoder, yv)?;
    if noise.eps.shape() != post.mean.shape().as_slice() {
        return Err(Error::Dimension("noise shape does not match the latent".into()));
    }
    let r = post.sample_with(&noise.eps);
    let numel = noise.eps.numel();
    let feats = bundle.dfr_critic.image_features(critic, yv);
    let lat = bundle.dfr_critic.latent_features(critic, r);
    let pos = bundle.dfr_critic.score(critic, feats, lat);
    let neg = bundle.dfr_critic.score(critic, feats.select_rows(&noise.perm), lat);
    let mi = jsd_bound(pos, neg);
    let recon = (bundle.decoder.forward(decoder, r)? - yv).abs().mean();
    let prior = mean_kl(post.aggregate().kl_to_standard_normal(), numel / batch);
    Ok(Terms(vec![
        (LossPart::MiY, mi, -1.0),
        (LossPart::Recon, recon, 1.0),
        (LossPart::PriorKl, prior, beta_star),
    ])
    .finish())
}

/// Which alignment network an alignment step trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignVariant {
    WithPilot,
    ZeroPilot,
}

impl AlignVariant {
    pub fn net(self) -> NetId {
        match self {
            AlignVariant::WithPilot => NetId::Alignment,
            AlignVariant::ZeroPilot => NetId::AlignmentNoPilot,
        }
    }

    fn network(self, bundle: &ModelBundle) -> &Alignment {
        match self {
            AlignVariant::WithPilot => &bundle.alignment,
            AlignVariant::ZeroPilot => &bundle.alignment_no_pilot,
        }
    }
}

/// Parameter bindings for an alignment step.
pub struct AlignBindings<'a, 'g> {
    pub dir_encoder: &'a Bound<'g>,
    pub dfr_encoder: &'a Bound<'g>,
    pub decoder: &'a Bound<'g>,
    pub alignment: &'a Bound<'g>,
    pub task_head: &'a Bound<'g>,
}

/// Alignment objective: latent L1 to the clean image's DfR mean, task
/// cross-entropy on the decoded refinement (weight `gamma1`) and image L1
/// (weight `gamma2`). Both encoders contribute posterior means.
#[allow(clippy::too_many_arguments)]
pub fn align_objective<'g>(
    g: &'g Graph,
    bundle: &ModelBundle,
    b: &AlignBindings<'_, 'g>,
    variant: AlignVariant,
    x: &Tensor,
    y_star: &Tensor,
    labels: &[usize],
    gamma1: f64,
    gamma2: f64,
) -> Result<GraphLoss<'g>> {
    let n = batch_of(x)?;
    if x.shape() != y_star.shape() {
        return Err(Error::Dimension("degraded and clean batches differ in shape".into()));
    }
    let xv = g.constant(x.clone());
    let yv = g.constant(y_star.clone());
    let r0 = bundle.dir_encoder.forward(b.dir_encoder, xv)?.mean;
    let pilot = match variant {
        AlignVariant::ZeroPilot => g.constant(Tensor::zeros(&r0.shape())),
        AlignVariant::WithPilot => bundle.dfr_encoder.forward(b.dfr_encoder, xv)?.mean,
    };
    let target = bundle.dfr_encoder.forward(b.dfr_encoder, yv)?.mean;
    let refined = variant.network(bundle).forward(b.alignment, r0, pilot)?.refined;
    let latent_l1 = (refined - target).abs().mean();
    let decoded = bundle.decoder.forward(b.decoder, refined)?;
    let recon = (decoded - yv).abs().mean();
    let mut terms = vec![(LossPart::LatentL1, latent_l1, 1.0)];
    if gamma1 > 0.0 {
        if labels.len() != n {
            return Err(Error::Batch(format!("{} labels for {n} images", labels.len())));
        }
        let logits = bundle.task_head.forward(b.task_head, decoded);
        terms.push((LossPart::Task, logits.cross_entropy(labels), gamma1));
    }
    terms.push((LossPart::Recon, recon, gamma2));
    Ok(Terms(terms).finish())
}

/// Evaluates the two-view objective without recording gradients.
pub fn loss_dir(
    bundle: &ModelBundle,
    x1: &Tensor,
    x2: &Tensor,
    w: DirWeights,
    rng: &mut impl Rng,
) -> Result<LossReport> {
    let g = Graph::new();
    let enc = bundle.params(NetId::DirEncoder).bind(&g, false);
    let critic = bundle.params(NetId::Critic).bind(&g, false);
    let shape = latent_shape(bundle, x1)?;
    let noise = LossNoise::draw(&shape, rng)?;
    Ok(dir_objective(&g, bundle, &enc, &critic, x1, x2, w, &noise)?.report)
}

pub fn loss_dfr(bundle: &ModelBundle, y_star: &Tensor, beta_star: f64, rng: &mut impl Rng) -> Result<LossReport> {
    let g = Graph::new();
    let enc = bundle.params(NetId::DfrEncoder).bind(&g, false);
    let dec = bundle.params(NetId::Decoder).bind(&g, false);
    let critic = bundle.params(NetId::DfrCritic).bind(&g, false);
    let shape = latent_shape(bundle, y_star)?;
    let noise = LossNoise::draw(&shape, rng)?;
    Ok(dfr_objective(&g, bundle, &enc, &dec, &critic, y_star, beta_star, &noise)?.report)
}

/// Evaluates the alignment objective with posterior means.
pub fn loss_align(
    bundle: &ModelBundle,
    x: &Tensor,
    y_star: &Tensor,
    labels: &[usize],
    gamma1: f64,
    gamma2: f64,
) -> Result<LossReport> {
    let g = Graph::new();
    let bind = |n: NetId| bundle.params(n).bind(&g, false);
    let (de, fe, dec, al, th) = (
        bind(NetId::DirEncoder),
        bind(NetId::DfrEncoder),
        bind(NetId::Decoder),
        bind(NetId::Alignment),
        bind(NetId::TaskHead),
    );
    let b = AlignBindings {
        dir_encoder: &de,
        dfr_encoder: &fe,
        decoder: &dec,
        alignment: &al,
        task_head: &th,
    };
    Ok(align_objective(&g, bundle, &b, AlignVariant::WithPilot, x, y_star, labels, gamma1, gamma2)?.report)
}

pub fn latent_shape(bundle: &ModelBundle, x: &Tensor) -> Result<Vec<usize>> {
    let n = batch_of(x)?;
    let cfg = &bundle.config.encoder;
    let (h, w) = (x.shape()[2], x.shape()[3]);
    let [c, lh, lw] = cfg.latent_shape(h, w);
    Ok(vec![n, c, lh, lw])
}
