use crate::autograd::Tensor;

use super::params::ParamSet;

/// Adam with bias correction, one instance per parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(ps: &ParamSet) -> Self {
        let zeros: Vec<_> = ps.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, ps: &mut ParamSet, grads: &[Tensor], lr: f64) {
        assert_eq!(grads.len(), ps.len(), "gradient count does not match parameter count");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in ps
            .params_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((x, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *x -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }

    /// First and second moment buffers, for checkpointing.
    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    pub fn from_moments(step: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step,
            m,
            v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Graph;

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut ps = ParamSet::new();
        let id = ps.add("x", Tensor::new(vec![2], vec![3.0, -2.0]));
        let mut opt = Adam::new(&ps);
        for _ in 0..2000 {
            let g = Graph::new();
            let b = ps.bind(&g, true);
            let loss = b.var(id).offset(-1.0).square().sum();
            let mut grads = g.backward(loss);
            let gs = b.grads(&mut grads);
            opt.update(&mut ps, &gs, 0.01);
        }
        for v in ps.get(id).data() {
            assert!((v - 1.0).abs() < 1e-3);
        }
    }
}
