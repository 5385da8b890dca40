use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tensor, Var};
use crate::distributions::{GaussianVar, LOGVAR_MAX, LOGVAR_MIN};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv2d, Linear, ParamId, ParamSet, LEAK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub in_channels: usize,
    pub base_width: usize,
    pub n_down: usize,
    pub latent_channels: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            base_width: 32,
            n_down: 3,
            latent_channels: 64,
        }
    }
}

impl EncoderConfig {
    /// Channel width after down-sampling stage `i`.
    pub fn width(&self, i: usize) -> usize {
        self.base_width << i.min(2)
    }

    pub fn factor(&self) -> usize {
        1 << self.n_down
    }

    pub fn latent_shape(&self, h: usize, w: usize) -> [usize; 3] {
        [self.latent_channels, h / self.factor(), w / self.factor()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_width == 0 || self.n_down == 0 || self.latent_channels == 0 {
            return Err(Error::Config("encoder widths and stage count must be positive".into()));
        }
        Ok(())
    }
}

fn check_image(x: &Var<'_>, channels: usize, factor: usize) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() != 4 || s[1] != channels {
        return Err(Error::Dimension(format!("expected [n, {channels}, h, w], got {s:?}")));
    }
    if !s[2].is_multiple_of(factor) || !s[3].is_multiple_of(factor) || s[2] == 0 || s[3] == 0 {
        return Err(Error::Dimension(format!(
            "image {}x{} not divisible by {factor}",
            s[2], s[3]
        )));
    }
    Ok((s[0], s[2], s[3]))
}

/// Down-sampling convolutional encoder with mean and log-variance heads.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    downs: Vec<Conv2d>,
    mean_head: Conv2d,
    logvar_head: Conv2d,
}

impl Encoder {
    pub fn new(ps: &mut ParamSet, cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        let mut downs = Vec::with_capacity(cfg.n_down);
        let mut c = cfg.in_channels;
        for i in 0..cfg.n_down {
            downs.push(Conv2d::down(ps, &format!("down{i}"), c, cfg.width(i), rng));
            c = cfg.width(i);
        }
        let mean_head = Conv2d::same3(ps, "mean", c, cfg.latent_channels, rng);
        let logvar_head = Conv2d::same3(ps, "logvar", c, cfg.latent_channels, rng);
        Self {
            cfg: cfg.clone(),
            downs,
            mean_head,
            logvar_head,
        }
    }

    /// Shrinks the log-variance head and sets its bias, so training starts
    /// from posteriors of variance about `exp(logvar)`.
    pub fn narrow_posteriors(&self, ps: &mut ParamSet, logvar: f64) {
        let (w, b) = self.logvar_head.param_ids();
        for v in ps.params_mut()[w.0].value.data_mut() {
            *v *= 0.1;
        }
        for v in ps.params_mut()[b.0].value.data_mut() {
            *v = logvar;
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<GaussianVar<'g>> {
        check_image(&x, self.cfg.in_channels, self.cfg.factor())?;
        let mut h = x;
        for d in &self.downs {
            h = d.forward(p, h).leaky_relu(LEAK);
        }
        let mean = self.mean_head.forward(p, h);
        let logvar = self.logvar_head.forward(p, h).clamp(LOGVAR_MIN, LOGVAR_MAX);
        Ok(GaussianVar::new(mean, logvar))
    }
}

/// Mirror of [`Encoder`]: nearest up-sampling stages, sigmoid output.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub cfg: EncoderConfig,
    stem: Conv2d,
    ups: Vec<Conv2d>,
    out: Conv2d,
}

impl Decoder {
    pub fn new(ps: &mut ParamSet, cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        let top = cfg.width(cfg.n_down - 1);
        let stem = Conv2d::same3(ps, "stem", cfg.latent_channels, top, rng);
        let mut ups = Vec::with_capacity(cfg.n_down);
        let mut c = top;
        for i in (0..cfg.n_down).rev() {
            let next = cfg.width(i.saturating_sub(1));
            ups.push(Conv2d::same3(ps, &format!("up{i}"), c, next, rng));
            c = next;
        }
        let out = Conv2d::same3(ps, "out", c, cfg.in_channels, rng);
        Self {
            cfg: cfg.clone(),
            stem,
            ups,
            out,
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, z: Var<'g>) -> Result<Var<'g>> {
        let s = z.shape();
        if s.len() != 4 || s[1] != self.cfg.latent_channels {
            return Err(Error::Dimension(format!(
                "decoder expects [n, {}, h, w], got {s:?}",
                self.cfg.latent_channels
            )));
        }
        let mut h = self.stem.forward(p, z).leaky_relu(LEAK);
        for up in &self.ups {
            h = up.forward(p, h.upsample2x()).leaky_relu(LEAK);
        }
        Ok(self.out.forward(p, h).sigmoid())
    }
}

/// Scores (image, latent) pairs. Image features are computed once and can be
/// re-paired with shuffled latents for the marginal term.
#[derive(Debug, Clone)]
pub struct Critic {
    pub cfg: EncoderConfig,
    image_convs: Vec<Conv2d>,
    latent_conv: Conv2d,
    hidden: Linear,
    head: Linear,
}

impl Critic {
    pub fn new(ps: &mut ParamSet, cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        Self::build(ps, cfg, rng, true)
    }

    /// Variant whose output head is randomly initialised rather than zero.
    pub fn new_random_head(ps: &mut ParamSet, cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        Self::build(ps, cfg, rng, false)
    }

    fn build(ps: &mut ParamSet, cfg: &EncoderConfig, rng: &mut impl Rng, zero_head: bool) -> Self {
        let mut image_convs = Vec::new();
        let mut c = cfg.in_channels;
        for i in 0..3 {
            image_convs.push(Conv2d::down(ps, &format!("img{i}"), c, cfg.width(i), rng));
            c = cfg.width(i);
        }
        let lat = 2 * cfg.base_width;
        let latent_conv = Conv2d::same3(ps, "lat", cfg.latent_channels, lat, rng);
        let hidden_width = 2 * cfg.base_width;
        let hidden = Linear::new(ps, "fc", c + lat, hidden_width, rng);
        let head = if zero_head {
            Linear::zeroed(ps, "score", hidden_width, 1)
        } else {
            Linear::new(ps, "score", hidden_width, 1, rng)
        };
        Self {
            cfg: cfg.clone(),
            image_convs,
            latent_conv,
            hidden,
            head,
        }
    }

    /// Pooled image features `[n, d]`.
    pub fn image_features<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        let mut h = x;
        for c in &self.image_convs {
            h = c.forward(p, h).leaky_relu(LEAK);
        }
        h.global_avg_pool()
    }

    pub fn latent_features<'g>(&self, p: &Bound<'g>, z: Var<'g>) -> Var<'g> {
        self.latent_conv.forward(p, z).leaky_relu(LEAK).global_avg_pool()
    }

    /// Scores `[n, 1]` for row-aligned feature pairs.
    pub fn score<'g>(&self, p: &Bound<'g>, image_feat: Var<'g>, latent_feat: Var<'g>) -> Var<'g> {
        let h = self.hidden.forward(p, image_feat.concat(latent_feat)).leaky_relu(LEAK);
        self.head.forward(p, h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    /// Number of generated 3×3 kernels; each acts on `width / k` feature channels.
    pub k: usize,
    pub kernel_size: usize,
    /// Feature width inside the network; 0 means "same as the latent".
    pub width: usize,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            m1: 4,
            m2: 2,
            m3: 4,
            k: 8,
            kernel_size: 3,
            width: 0,
        }
    }
}

impl AlignmentConfig {
    pub fn feature_width(&self, latent_channels: usize) -> usize {
        if self.width == 0 {
            latent_channels
        } else {
            self.width
        }
    }

    pub fn validate(&self, latent_channels: usize) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 || self.m3 == 0 || self.k == 0 {
            return Err(Error::Config("alignment layer counts and k must be at least 1".into()));
        }
        if self.kernel_size != 3 {
            return Err(Error::Config("only 3x3 adaptive kernels are supported".into()));
        }
        let f = self.feature_width(latent_channels);
        if !f.is_multiple_of(self.k) {
            return Err(Error::Config(format!("feature width {f} not divisible by k = {}", self.k)));
        }
        Ok(())
    }
}

/// Intermediate tensors of one alignment pass.
pub struct AlignOutput<'g> {
    pub refined: Var<'g>,
    pub attention: Var<'g>,
    pub kernels: Var<'g>,
}

/// Pilot-guided refinement of a latent grid.
///
/// A1 extracts features `f` from `r0`. The pilot generates `k` depthwise 3×3
/// kernels (G-Conv path, `f_k`) and, together with `f`, sigmoid attention
/// maps, one per feature channel, that gate `f` (`f_a`). A3 maps `f_k + f_a`
/// to the refined latent.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub cfg: AlignmentConfig,
    pub latent_channels: usize,
    a1: Vec<Conv2d>,
    pilot_convs: Vec<Conv2d>,
    kernel_gen: Linear,
    attention: Conv2d,
    a3: Vec<Conv2d>,
}

fn conv_stack(ps: &mut ParamSet, name: &str, n: usize, c_in: usize, width: usize, c_out: usize, rng: &mut impl Rng) -> Vec<Conv2d> {
    (0..n)
        .map(|i| {
            let ci = if i == 0 { c_in } else { width };
            let co = if i + 1 == n { c_out } else { width };
            Conv2d::same3(ps, &format!("{name}.{i}"), ci, co, rng)
        })
        .collect()
}

impl Alignment {
    pub fn new(ps: &mut ParamSet, cfg: &AlignmentConfig, latent_channels: usize, rng: &mut impl Rng) -> Self {
        let f = cfg.feature_width(latent_channels);
        let c = latent_channels;
        let a1 = conv_stack(ps, "a1", cfg.m1, c, f, f, rng);
        let pilot_convs = conv_stack(ps, "a2.pilot", cfg.m2, c, f, f, rng);
        let kernel_gen = Linear::new(ps, "a2.kernels", f, cfg.k * 9, rng);
        // Scale the generator down and bias every kernel towards the identity tap.
        let (w_id, b_id) = (ParamId(ps.len() - 2), ParamId(ps.len() - 1));
        for v in ps.params_mut()[w_id.0].value.data_mut() {
            *v *= 0.1;
        }
        let bias = &mut ps.params_mut()[b_id.0].value;
        for g in 0..cfg.k {
            bias.data_mut()[g * 9 + 4] = 1.0;
        }
        let attention = Conv2d::same3(ps, "a2.attention", f + c, f, rng);
        let a3 = conv_stack(ps, "a3", cfg.m3, f, f, c, rng);
        Self {
            cfg: cfg.clone(),
            latent_channels,
            a1,
            pilot_convs,
            kernel_gen,
            attention,
            a3,
        }
    }

    fn stack<'g>(p: &Bound<'g>, layers: &[Conv2d], x: Var<'g>, activate_last: bool) -> Var<'g> {
        let mut h = x;
        for (i, l) in layers.iter().enumerate() {
            h = l.forward(p, h);
            if activate_last || i + 1 < layers.len() {
                h = h.leaky_relu(LEAK);
            }
        }
        h
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, r0: Var<'g>, pilot: Var<'g>) -> Result<AlignOutput<'g>> {
        self.forward_with(p, r0, pilot, None)
    }

    /// As [`Alignment::forward`], optionally replacing the attention map.
    pub fn forward_with<'g>(
        &self,
        p: &Bound<'g>,
        r0: Var<'g>,
        pilot: Var<'g>,
        attention_override: Option<Var<'g>>,
    ) -> Result<AlignOutput<'g>> {
        let (rs, ps) = (r0.shape(), pilot.shape());
        if rs != ps || rs.len() != 4 || rs[1] != self.latent_channels {
            return Err(Error::Dimension(format!("alignment inputs {rs:?} and {ps:?}")));
        }
        let n = rs[0];
        let f = Self::stack(p, &self.a1, r0, true);
        let g = Self::stack(p, &self.pilot_convs, pilot, true).global_avg_pool();
        let kernels = self.kernel_gen.forward(p, g).reshape(&[n, self.cfg.k, 3, 3]);
        let f_k = f.dyn_depthwise(kernels);
        let attention = match attention_override {
            Some(a) => a,
            None => self.attention.forward(p, f.concat(pilot)).sigmoid(),
        };
        let f_a = f * attention;
        let refined = Self::stack(p, &self.a3, f_k + f_a, false);
        Ok(AlignOutput {
            refined,
            attention,
            kernels,
        })
    }
}

/// Small classifier used as the downstream task network.
#[derive(Debug, Clone)]
pub struct TaskHead {
    pub n_classes: usize,
    convs: Vec<Conv2d>,
    fc: Linear,
}

impl TaskHead {
    pub fn new(ps: &mut ParamSet, cfg: &EncoderConfig, n_classes: usize, rng: &mut impl Rng) -> Self {
        let mut convs = Vec::new();
        let mut c = cfg.in_channels;
        for i in 0..3 {
            convs.push(Conv2d::down(ps, &format!("conv{i}"), c, cfg.width(i), rng));
            c = cfg.width(i);
        }
        let fc = Linear::new(ps, "fc", c, n_classes, rng);
        Self { n_classes, convs, fc }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        let mut h = x;
        for c in &self.convs {
            h = c.forward(p, h).leaky_relu(LEAK);
        }
        self.fc.forward(p, h.global_avg_pool())
    }
}

/// Row-wise softmax of a `[n, k]` logit tensor.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let k = logits.shape()[1];
    let data = logits.data().chunks(k).flat_map(crate::autograd::softmax).collect();
    Tensor::new(logits.shape().to_vec(), data)
}
