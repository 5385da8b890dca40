//! Finite-difference verification of the three training objectives.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::{
    align_objective, dfr_objective, dir_objective, latent_shape, AlignBindings, AlignVariant, DirWeights,
    LossNoise,
};
use crate::autograd::{Graph, Tensor};
use crate::corpus::gen_toy_corpus_sized;
use crate::error::{Error, Result};
use crate::isp::{make_pair, DegradationProfile, ImageRgb};
use crate::networks::{AlignmentConfig, EncoderConfig, ModelBundle, ModelConfig, NetId};

pub const FD_STEP: f64 = 1e-5;
/// Magnitude below which differences are compared absolutely.
pub const REL_FLOOR: f64 = 1e-4;
pub const MINI_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossName {
    Dir,
    Dfr,
    Align,
}

impl LossName {
    pub const ALL: [LossName; 3] = [LossName::Dir, LossName::Dfr, LossName::Align];

    /// Parameter sets the objective trains.
    pub fn trainable(self) -> &'static [NetId] {
        match self {
            LossName::Dir => &[NetId::DirEncoder, NetId::Critic],
            LossName::Dfr => &[NetId::DfrEncoder, NetId::Decoder, NetId::DfrCritic],
            LossName::Align => &[NetId::Alignment, NetId::TaskHead],
        }
    }
}

impl FromStr for LossName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss_dir" | "dir" => Ok(LossName::Dir),
            "loss_dfr" | "dfr" => Ok(LossName::Dfr),
            "loss_align" | "align" => Ok(LossName::Align),
            other => Err(Error::UnknownKey(other.to_string())),
        }
    }
}

impl fmt::Display for LossName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossName::Dir => "loss_dir",
            LossName::Dfr => "loss_dfr",
            LossName::Align => "loss_align",
        })
    }
}

/// Networks small enough to difference every parameter: 16×16 images,
/// a 4×2×2 latent and a two-block alignment network.
pub fn miniature_config(seed: u64) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            in_channels: 3,
            base_width: 2,
            n_down: 3,
            latent_channels: 4,
        },
        alignment: AlignmentConfig {
            m1: 2,
            m2: 2,
            m3: 2,
            k: 2,
            kernel_size: 3,
            width: 4,
        },
        n_classes: 3,
        init_seed: seed,
    }
}

/// Miniature bundle with random critic heads, so no gradient is trivially zero.
pub fn miniature_bundle(seed: u64) -> Result<ModelBundle> {
    ModelBundle::new_with_random_critic_heads(&miniature_config(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstEntry {
    pub param: String,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub loss: LossName,
    pub max_rel_error: f64,
    pub n_checked: usize,
    pub worst: Option<WorstEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Fixed inputs and noise for one check.
struct Fixture {
    x1: Tensor,
    x2: Tensor,
    y: Tensor,
    labels: Vec<usize>,
    noise: LossNoise,
}

impl Fixture {
    fn new(bundle: &ModelBundle, seed: u64) -> Result<Self> {
        let n_classes = bundle.config.n_classes.max(2);
        let corpus = gen_toy_corpus_sized(3, n_classes, MINI_SIZE, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let profile = DegradationProfile::default_preset();
        let (mut v1, mut v2) = (Vec::new(), Vec::new());
        for s in &corpus {
            let (a, b) = make_pair(&s.clean, &profile, &mut rng)?;
            v1.push(a.image);
            v2.push(b.image);
        }
        let refs = |v: &[ImageRgb]| ImageRgb::batch(&v.iter().collect::<Vec<_>>());
        let clean: Vec<ImageRgb> = corpus.iter().map(|s| s.clean.clone()).collect();
        let y = refs(&clean)?;
        let shape = latent_shape(bundle, &y)?;
        Ok(Self {
            x1: refs(&v1)?,
            x2: refs(&v2)?,
            labels: corpus.iter().map(|s| s.label % bundle.config.n_classes).collect(),
            noise: LossNoise::draw(&shape, &mut rng)?,
            y,
        })
    }
}

const GC_WEIGHTS: DirWeights = DirWeights { lambda: 1.0, beta: 0.5 };
const GC_BETA_STAR: f64 = 1.0;
const GC_GAMMA: (f64, f64) = (2.0, 1.0);

/// Loss value and, when requested, gradients for every trainable set.
fn evaluate(loss: LossName, bundle: &ModelBundle, fx: &Fixture, grads: bool) -> Result<(f64, Vec<Vec<Tensor>>)> {
    let g = Graph::new();
    let trainable = loss.trainable();
    let bind = |n: NetId| bundle.params(n).bind(&g, grads && trainable.contains(&n));
    let (total, bound) = match loss {
        LossName::Dir => {
            let (e, c) = (bind(NetId::DirEncoder), bind(NetId::Critic));
            let l = dir_objective(&g, bundle, &e, &c, &fx.x1, &fx.x2, GC_WEIGHTS, &fx.noise)?;
            (l.total, vec![e, c])
        }
        LossName::Dfr => {
            let (e, d, c) = (bind(NetId::DfrEncoder), bind(NetId::Decoder), bind(NetId::DfrCritic));
            let l = dfr_objective(&g, bundle, &e, &d, &c, &fx.y, GC_BETA_STAR, &fx.noise)?;
            (l.total, vec![e, d, c])
        }
        LossName::Align => {
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
            let (g1, g2) = GC_GAMMA;
            let l = align_objective(&g, bundle, &b, AlignVariant::WithPilot, &fx.x1, &fx.y, &fx.labels, g1, g2)?;
            (l.total, vec![al, th])
        }
    };
    let value = total.item();
    if !grads {
        return Ok((value, Vec::new()));
    }
    let mut gr = g.backward(total);
    Ok((value, bound.iter().map(|b| b.grads(&mut gr)).collect()))
}

/// Compares analytic gradients of `loss` against central differences for
/// every scalar of every trainable parameter.
pub fn grad_check(loss: LossName, bundle: &ModelBundle, tolerance: f64, seed: u64) -> Result<GradCheckReport> {
    let fx = Fixture::new(bundle, seed)?;
    let (_, analytic) = evaluate(loss, bundle, &fx, true)?;
    let mut work = bundle.clone();
    let mut report = GradCheckReport {
        loss,
        max_rel_error: 0.0,
        n_checked: 0,
        worst: None,
        tolerance,
    };
    for (net, grads) in loss.trainable().iter().zip(&analytic) {
        for (pi, grad) in grads.iter().enumerate() {
            for i in 0..grad.numel() {
                let orig = work.params(*net).params()[pi].value.data()[i];
                let mut at = |v: f64| -> Result<f64> {
                    work.params_mut_unchecked(*net).params_mut()[pi].value.data_mut()[i] = v;
                    Ok(evaluate(loss, &work, &fx, false)?.0)
                };
                let plus = at(orig + FD_STEP)?;
                let minus = at(orig - FD_STEP)?;
                at(orig)?;
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                let a = grad.data()[i];
                let err = rel_error(a, numeric);
                report.n_checked += 1;
                if err > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = report.max_rel_error.max(err);
                    report.worst = Some(WorstEntry {
                        param: format!("{net}/{}[{i}]", work.params(*net).params()[pi].name),
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_uses_the_floor() {
        assert_eq!(rel_error(0.0, 0.0), 0.0);
        assert!((rel_error(1e-9, 0.0) - 1e-5).abs() < 1e-15);
        assert!((rel_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn names_parse() {
        assert_eq!("loss_dir".parse::<LossName>().unwrap(), LossName::Dir);
        assert_eq!("align".parse::<LossName>().unwrap(), LossName::Align);
        assert!("loss_gan".parse::<LossName>().is_err());
        assert_eq!(LossName::Dfr.to_string(), "loss_dfr");
    }

    #[test]
    fn miniature_latent_is_4x2x2() {
        let cfg = miniature_config(0);
        assert_eq!(cfg.encoder.latent_shape(MINI_SIZE, MINI_SIZE), [4, 2, 2]);
        cfg.validate().unwrap();
    }

    #[test]
    fn analytic_gradients_are_nonzero() {
        let b = miniature_bundle(1).unwrap();
        let fx = Fixture::new(&b, 2).unwrap();
        for loss in LossName::ALL {
            let (_, grads) = evaluate(loss, &b, &fx, true).unwrap();
            for (net, g) in loss.trainable().iter().zip(&grads) {
                let norm: f64 = g.iter().map(|t| t.data().iter().map(|v| v * v).sum::<f64>()).sum();
                assert!(norm > 0.0, "{loss}: {net} has a zero gradient");
            }
        }
    }
}
