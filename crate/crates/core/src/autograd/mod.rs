//! Minimal reverse-mode automatic differentiation over `f64` tensors.
//!
//! Everything runs in double precision so the same networks serve both
//! training and finite-difference gradient verification.

mod graph;
mod kernels;
mod tensor;

pub use graph::{softplus, Gradients, Graph, Var};
pub(crate) use graph::softmax;
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences of `f` with respect to every entry of `inputs[which]`.
    fn numeric_grad(inputs: &[Tensor], which: usize, f: &dyn Fn(&[Tensor]) -> f64) -> Tensor {
        let h = 1e-6;
        let mut out = Tensor::zeros(inputs[which].shape());
        for i in 0..inputs[which].numel() {
            let mut plus = inputs.to_vec();
            plus[which].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[which].data_mut()[i] -= h;
            out.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    fn check(inputs: Vec<Tensor>, build: impl for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>) {
        let eval = |xs: &[Tensor]| {
            let g = Graph::new();
            let vars: Vec<_> = xs.iter().map(|t| g.param(t.clone())).collect();
            build(&g, &vars).item()
        };
        let g = Graph::new();
        let vars: Vec<_> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let out = build(&g, &vars);
        let grads = g.backward(out);
        for (k, v) in vars.iter().enumerate() {
            let analytic = grads.get(*v);
            let numeric = numeric_grad(&inputs, k, &eval);
            for (a, n) in analytic.data().iter().zip(numeric.data()) {
                let denom = a.abs().max(n.abs()).max(1e-6);
                assert!((a - n).abs() / denom < 1e-5, "input {k}: analytic {a} vs numeric {n}");
            }
        }
    }

    fn pseudo(shape: &[usize], seed: u64) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|i| (((i as u64 + 1) * (seed * 2654435761 + 97)) % 1000) as f64 / 500.0 - 1.0)
            .collect();
        Tensor::new(shape.to_vec(), data)
    }

    #[test]
    fn elementwise_ops_gradients() {
        check(vec![pseudo(&[2, 3], 1), pseudo(&[2, 3], 2)], |_, v| {
            let a = v[0];
            let b = v[1];
            ((a * b).exp() + (a - b).square().scale(0.5) + a.sigmoid() + b.softplus()).sum()
        });
        check(vec![pseudo(&[7], 3).map(|x| x + 0.01)], |_, v| {
            (v[0].leaky_relu(0.2) + v[0].abs() + v[0].clamp(-0.5, 0.5)).sum()
        });
        check(vec![pseudo(&[5], 4).map(|x| x.abs() + 0.5)], |_, v| v[0].ln().mean());
    }

    #[test]
    fn conv_and_pool_gradients() {
        check(
            vec![pseudo(&[2, 3, 6, 6], 5), pseudo(&[4, 3, 4, 4], 6), pseudo(&[4], 7)],
            |_, v| v[0].conv2d(v[1], v[2], 2, 1).square().sum(),
        );
        check(
            vec![pseudo(&[2, 2, 3, 3], 8), pseudo(&[3, 2, 3, 3], 9), pseudo(&[3], 10)],
            |_, v| v[0].upsample2x().conv2d(v[1], v[2], 1, 1).global_avg_pool().square().sum(),
        );
    }

    #[test]
    fn structural_op_gradients() {
        check(
            vec![pseudo(&[3, 4], 11), pseudo(&[2, 4], 12), pseudo(&[2], 13)],
            |_, v| v[0].linear(v[1], v[2]).select_rows(&[2, 0, 1, 0]).square().sum(),
        );
        check(vec![pseudo(&[2, 2, 3, 3], 14), pseudo(&[2, 1, 3, 3], 15)], |_, v| {
            v[0].concat(v[1]).narrow_rows(1, 1).square().sum() + v[0].mul_map(v[1]).sum()
        });
        check(vec![pseudo(&[2, 4, 4, 4], 16), pseudo(&[2, 2, 3, 3], 17)], |_, v| {
            v[0].dyn_depthwise(v[1]).square().sum()
        });
        check(vec![pseudo(&[3, 5], 18)], |_, v| {
            v[0].cross_entropy(&[1, 4, 0]) + v[0].reshape(&[15]).square().mean()
        });
    }

    #[test]
    fn constants_receive_no_gradient() {
        let g = Graph::new();
        let a = g.constant(Tensor::full(&[3], 2.0));
        let b = g.param(Tensor::full(&[3], 1.5));
        let loss = (a * b).sum();
        let grads = g.backward(loss);
        assert_eq!(grads.get(b).data(), &[2.0, 2.0, 2.0]);
        assert_eq!(grads.get(a).data(), &[0.0, 0.0, 0.0]);
    }
}
