use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{derangement, jsd_bound};
use crate::autograd::{Graph, Tensor, Var};
use crate::error::Result;
use crate::nn::{Adam, Bound, Linear, ParamSet, LEAK};

/// MLP critic over concatenated vector pairs `(x, y)`.
pub struct VectorCritic {
    layers: Vec<Linear>,
    pub params: ParamSet,
}

impl VectorCritic {
    pub fn new(dim_x: usize, dim_y: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let layers = vec![
            Linear::new(&mut params, "fc1", dim_x + dim_y, hidden, rng),
            Linear::new(&mut params, "fc2", hidden, hidden, rng),
            Linear::zeroed(&mut params, "out", hidden, 1),
        ];
        Self { layers, params }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, xy: Var<'g>) -> Var<'g> {
        let mut h = xy;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(p, h);
            if i + 1 < self.layers.len() {
                h = h.leaky_relu(LEAK);
            }
        }
        h
    }
}

fn pair_rows(x: &[Vec<f64>], y: &[Vec<f64>], idx: &[usize], perm: Option<&[usize]>) -> Tensor {
    let d = x[0].len() + y[0].len();
    let mut data = Vec::with_capacity(idx.len() * d);
    for (k, &i) in idx.iter().enumerate() {
        data.extend_from_slice(&x[i]);
        let j = perm.map_or(i, |p| idx[p[k]]);
        data.extend_from_slice(&y[j]);
    }
    Tensor::new(vec![idx.len(), d], data)
}

#[derive(Debug, Clone)]
pub struct JsdFitConfig {
    pub hidden: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for JsdFitConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            steps: 600,
            batch: 256,
            lr: 2e-3,
            seed: 0,
        }
    }
}

/// Trains a critic to maximise the JSD bound on `(train_x, train_y)` and
/// returns the bound evaluated on the held-out pairs.
pub fn estimate_jsd_mi(
    train: (&[Vec<f64>], &[Vec<f64>]),
    test: (&[Vec<f64>], &[Vec<f64>]),
    cfg: &JsdFitConfig,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (tx, ty) = train;
    let mut critic = VectorCritic::new(tx[0].len(), ty[0].len(), cfg.hidden, &mut rng);
    let mut opt = Adam::new(&critic.params);
    let n = tx.len();
    for _ in 0..cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch.min(n)).map(|_| rng.random_range(0..n)).collect();
        let perm = derangement(idx.len(), &mut rng)?;
        let g = Graph::new();
        let p = critic.params.bind(&g, true);
        let joint = critic.forward(&p, g.constant(pair_rows(tx, ty, &idx, None)));
        let marginal = critic.forward(&p, g.constant(pair_rows(tx, ty, &idx, Some(&perm))));
        let loss = -jsd_bound(joint, marginal);
        let mut grads = g.backward(loss);
        let grads = p.grads(&mut grads);
        opt.update(&mut critic.params, &grads, cfg.lr);
    }
    let (ex, ey) = test;
    let idx: Vec<usize> = (0..ex.len()).collect();
    let perm = derangement(idx.len(), &mut rng)?;
    let g = Graph::new();
    let p = critic.params.bind(&g, false);
    let joint = critic.forward(&p, g.constant(pair_rows(ex, ey, &idx, None)));
    let marginal = critic.forward(&p, g.constant(pair_rows(ex, ey, &idx, Some(&perm))));
    Ok(jsd_bound(joint, marginal).item())
}

/// `n` draws of a standard bivariate Gaussian with correlation `rho`, split as (x, y).
pub fn correlated_gaussian(n: usize, rho: f64, rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let s = (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            (vec![a], vec![rho * a + s * b])
        })
        .unzip()
}
