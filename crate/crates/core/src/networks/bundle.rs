use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{Alignment, AlignmentConfig, Critic, Decoder, Encoder, EncoderConfig, TaskHead};
use crate::autograd::{Graph, Tensor};
use crate::distributions::DiagonalGaussian;
use crate::error::{Error, Result};
use crate::isp::ImageRgb;
use crate::nn::ParamSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub alignment: AlignmentConfig,
    pub n_classes: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            alignment: AlignmentConfig::default(),
            n_classes: 4,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.alignment.validate(self.encoder.latent_channels)?;
        if self.n_classes < 2 {
            return Err(Error::Config("n_classes must be at least 2".into()));
        }
        Ok(())
    }
}

/// Initial log-variance of the degradation-free posteriors.
pub const DFR_INIT_LOGVAR: f64 = -4.0;

/// The trainable networks of the bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetId {
    DirEncoder,
    DfrEncoder,
    Decoder,
    Critic,
    DfrCritic,
    Alignment,
    AlignmentNoPilot,
    TaskHead,
}

impl NetId {
    pub const ALL: [NetId; 8] = [
        NetId::DirEncoder,
        NetId::DfrEncoder,
        NetId::Decoder,
        NetId::Critic,
        NetId::DfrCritic,
        NetId::Alignment,
        NetId::AlignmentNoPilot,
        NetId::TaskHead,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NetId::DirEncoder => "dir_encoder",
            NetId::DfrEncoder => "dfr_encoder",
            NetId::Decoder => "decoder",
            NetId::Critic => "critic",
            NetId::DfrCritic => "dfr_critic",
            NetId::Alignment => "alignment",
            NetId::AlignmentNoPilot => "alignment_no_pilot",
            NetId::TaskHead => "task_head",
        }
    }
}

impl fmt::Display for NetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NetId::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownKey(s.to_string()))
    }
}

/// All networks with their parameters. Architectures are a pure function of
/// the config; parameter values are initialised from `init_seed`.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub dir_encoder: Encoder,
    pub dfr_encoder: Encoder,
    pub decoder: Decoder,
    pub critic: Critic,
    pub dfr_critic: Critic,
    pub alignment: Alignment,
    pub alignment_no_pilot: Alignment,
    pub task_head: TaskHead,
    params: Vec<ParamSet>,
    frozen: BTreeSet<NetId>,
}

impl ModelBundle {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        Self::build(config, false)
    }

    /// Critics get random rather than zero output heads (used for gradient checks,
    /// where a zero head would leave the critic body without gradient).
    pub fn new_with_random_critic_heads(config: &ModelConfig) -> Result<Self> {
        Self::build(config, true)
    }

    fn build(config: &ModelConfig, random_heads: bool) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let enc = &config.encoder;
        let c = enc.latent_channels;
        let mut params: Vec<ParamSet> = NetId::ALL.iter().map(|_| ParamSet::new()).collect();
        let idx = |n: NetId| n as usize;
        let dir_encoder = Encoder::new(&mut params[idx(NetId::DirEncoder)], enc, &mut rng);
        let dfr_encoder = Encoder::new(&mut params[idx(NetId::DfrEncoder)], enc, &mut rng);
        dfr_encoder.narrow_posteriors(&mut params[idx(NetId::DfrEncoder)], DFR_INIT_LOGVAR);
        let decoder = Decoder::new(&mut params[idx(NetId::Decoder)], enc, &mut rng);
        let make_critic = |ps: &mut ParamSet, rng: &mut ChaCha8Rng| {
            if random_heads {
                Critic::new_random_head(ps, enc, rng)
            } else {
                Critic::new(ps, enc, rng)
            }
        };
        let critic = make_critic(&mut params[idx(NetId::Critic)], &mut rng);
        let dfr_critic = make_critic(&mut params[idx(NetId::DfrCritic)], &mut rng);
        let alignment = Alignment::new(&mut params[idx(NetId::Alignment)], &config.alignment, c, &mut rng);
        let alignment_no_pilot =
            Alignment::new(&mut params[idx(NetId::AlignmentNoPilot)], &config.alignment, c, &mut rng);
        let task_head = TaskHead::new(&mut params[idx(NetId::TaskHead)], enc, config.n_classes, &mut rng);
        Ok(Self {
            config: config.clone(),
            dir_encoder,
            dfr_encoder,
            decoder,
            critic,
            dfr_critic,
            alignment,
            alignment_no_pilot,
            task_head,
            params,
            frozen: BTreeSet::new(),
        })
    }

    pub fn params(&self, net: NetId) -> &ParamSet {
        &self.params[net as usize]
    }

    /// Mutable access; refused for frozen sets.
    pub fn params_mut(&mut self, net: NetId) -> Result<&mut ParamSet> {
        if self.frozen.contains(&net) {
            return Err(Error::FrozenViolation(net.to_string()));
        }
        Ok(&mut self.params[net as usize])
    }

    pub(crate) fn params_mut_unchecked(&mut self, net: NetId) -> &mut ParamSet {
        &mut self.params[net as usize]
    }

    pub fn freeze(&mut self, names: &[&str]) -> Result<()> {
        let ids = names.iter().map(|n| n.parse()).collect::<Result<Vec<NetId>>>()?;
        self.frozen.extend(ids);
        Ok(())
    }

    pub fn unfreeze_all(&mut self) {
        self.frozen.clear();
    }

    pub fn is_frozen(&self, net: NetId) -> bool {
        self.frozen.contains(&net)
    }

    pub fn checksum(&self, name: &str) -> Result<String> {
        let id: NetId = name.parse()?;
        Ok(self.params(id).checksum())
    }

    /// Posterior of the DiR encoder (or DfR encoder) for a batch of images.
    pub fn encode(&self, net: NetId, images: &[&ImageRgb]) -> Result<DiagonalGaussian> {
        let enc = match net {
            NetId::DirEncoder => &self.dir_encoder,
            NetId::DfrEncoder => &self.dfr_encoder,
            other => return Err(Error::UnknownKey(format!("{other} is not an encoder"))),
        };
        let g = Graph::new();
        let p = self.params(net).bind(&g, false);
        let x = g.constant(ImageRgb::batch(images)?);
        enc.forward(&p, x)?.value()
    }

    /// `poe(encode(x1), encode(x2))` with the DiR encoder.
    pub fn encode_joint(&self, x1: &[&ImageRgb], x2: &[&ImageRgb]) -> Result<DiagonalGaussian> {
        self.encode(NetId::DirEncoder, x1)?.poe(&self.encode(NetId::DirEncoder, x2)?)
    }

    pub fn decode(&self, latent: &Tensor) -> Result<Vec<ImageRgb>> {
        let g = Graph::new();
        let p = self.params(NetId::Decoder).bind(&g, false);
        let out = self.decoder.forward(&p, g.constant(latent.clone()))?.tensor();
        ImageRgb::unbatch(&out)
    }

    /// Refined latent from the chosen alignment network.
    pub fn align(&self, net: NetId, r0: &Tensor, pilot: &Tensor) -> Result<Tensor> {
        let a = match net {
            NetId::Alignment => &self.alignment,
            NetId::AlignmentNoPilot => &self.alignment_no_pilot,
            other => return Err(Error::UnknownKey(format!("{other} is not an alignment network"))),
        };
        let g = Graph::new();
        let p = self.params(net).bind(&g, false);
        Ok(a.forward(&p, g.constant(r0.clone()), g.constant(pilot.clone()))?.refined.tensor())
    }

    /// Class logits `[n, n_classes]`.
    pub fn task_forward(&self, images: &[&ImageRgb]) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.params(NetId::TaskHead).bind(&g, false);
        Ok(self.task_head.forward(&p, g.constant(ImageRgb::batch(images)?)).tensor())
    }

    /// Restoration through the full pipeline: means of the DiR and pilot
    /// posteriors, alignment, decoding. `zero_pilot` feeds a zero pilot grid.
    pub fn restore(&self, net: NetId, images: &[&ImageRgb], zero_pilot: bool) -> Result<Vec<ImageRgb>> {
        let r0 = self.encode(NetId::DirEncoder, images)?.mean().clone();
        let pilot = if zero_pilot {
            Tensor::zeros(r0.shape())
        } else {
            self.encode(NetId::DfrEncoder, images)?.mean().clone()
        };
        self.decode(&self.align(net, &r0, &pilot)?)
    }
}
