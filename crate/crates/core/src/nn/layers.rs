use rand::Rng;

use super::params::{he_uniform, Bound, ParamId, ParamSet};
use crate::autograd::{Tensor, Var};

pub const LEAK: f64 = 0.2;

#[derive(Debug, Clone, Copy)]
pub struct Conv2d {
    weight: ParamId,
    bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = c_in * kernel * kernel;
        let weight = ps.add(
            format!("{name}.weight"),
            he_uniform(&[c_out, c_in, kernel, kernel], fan_in, rng),
        );
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[c_out]));
        Self {
            weight,
            bias,
            c_in,
            c_out,
            kernel,
            stride,
            pad,
        }
    }

    /// 3×3, stride 1, same padding.
    pub fn same3(ps: &mut ParamSet, name: &str, c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        Self::new(ps, name, c_in, c_out, 3, 1, 1, rng)
    }

    /// 4×4, stride 2, padding 1: halves the spatial size.
    pub fn down(ps: &mut ParamSet, name: &str, c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        Self::new(ps, name, c_in, c_out, 4, 2, 1, rng)
    }

    pub fn param_ids(&self) -> (ParamId, ParamId) {
        (self.weight, self.bias)
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        x.conv2d(p.var(self.weight), p.var(self.bias), self.stride, self.pad)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    weight: ParamId,
    bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let weight = ps.add(format!("{name}.weight"), he_uniform(&[d_out, d_in], d_in, rng));
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[d_out]));
        Self {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    /// A linear layer whose weights start at zero, so its output is the bias.
    pub fn zeroed(ps: &mut ParamSet, name: &str, d_in: usize, d_out: usize) -> Self {
        let weight = ps.add(format!("{name}.weight"), Tensor::zeros(&[d_out, d_in]));
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[d_out]));
        Self {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        x.linear(p.var(self.weight), p.var(self.bias))
    }
}
