//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every op applied to its [`Var`]s. Nodes built only from
//! constants carry no gradient and are skipped by [`Graph::backward`], so
//! frozen networks run through the same code path at forward-only cost.

use std::cell::{Ref, RefCell};
use std::ops;

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Exp(usize),
    Log(usize),
    Abs(usize),
    Square(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Softplus(usize),
    Clamp(usize, f64, f64),
    Sum(usize),
    MulMap(usize, usize),
    Conv2d {
        x: usize,
        w: usize,
        b: usize,
        geom: ConvGeom,
    },
    DynDepthwise {
        x: usize,
        k: usize,
        groups: usize,
    },
    Upsample2x(usize),
    GlobalAvgPool(usize),
    Linear {
        x: usize,
        w: usize,
        b: usize,
    },
    Concat1(usize, usize),
    SelectRows(usize, Vec<usize>),
    NarrowRows(usize, usize),
    Reshape(usize),
    CrossEntropy(usize, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recording context for one forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` did not influence the root.
    pub fn get(&self, v: Var<'_>) -> Tensor {
        match &self.grads[v.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.id]),
        }
    }

    /// Moves the gradient out, leaving zeros behind.
    pub fn take(&mut self, v: Var<'_>) -> Tensor {
        self.grads[v.id]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.id]))
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow for large `|t|`.
pub fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t + (-t).exp().ln_1p()
    } else if t < -30.0 {
        t.exp()
    } else {
        t.exp().ln_1p()
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "elementwise op on mismatched shapes");
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// A differentiable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var<'_>) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[v.id].value)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    fn unary(&self, a: Var<'_>, f: impl Fn(&Tensor) -> Tensor, op: Op) -> Var<'_> {
        let value = f(&self.value(a));
        let ng = self.needs(a.id);
        self.push(value, op, ng)
    }

    fn binary(&self, a: Var<'_>, b: Var<'_>, value: Tensor, op: Op) -> Var<'_> {
        let ng = self.needs(a.id) || self.needs(b.id);
        self.push(value, op, ng)
    }

    /// Reverse sweep from a one-element `root`.
    pub fn backward(&self, root: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[root.id].value.numel(), 1, "backward from non-scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[root.id] = Some(Tensor::full(nodes[root.id].value.shape(), 1.0));
        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(gout) = grads[id].take() else {
                continue;
            };
            let ng = |i: usize| nodes[i].needs_grad;
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(gout);
                }
                Op::Add(a, b) => {
                    if ng(*a) {
                        accumulate(&mut grads, *a, gout.clone());
                    }
                    if ng(*b) {
                        accumulate(&mut grads, *b, gout);
                    }
                }
                Op::Sub(a, b) => {
                    if ng(*a) {
                        accumulate(&mut grads, *a, gout.clone());
                    }
                    if ng(*b) {
                        accumulate(&mut grads, *b, gout.map(|v| -v));
                    }
                }
                Op::Mul(a, b) => {
                    if ng(*a) {
                        accumulate(&mut grads, *a, zip_map(&gout, val(*b), |g, y| g * y));
                    }
                    if ng(*b) {
                        accumulate(&mut grads, *b, zip_map(&gout, val(*a), |g, x| g * x));
                    }
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, gout.map(|g| g * s)),
                Op::Offset(a) => accumulate(&mut grads, *a, gout),
                Op::Exp(a) => {
                    accumulate(&mut grads, *a, zip_map(&gout, &node.value, |g, y| g * y))
                }
                Op::Log(a) => accumulate(&mut grads, *a, zip_map(&gout, val(*a), |g, x| g / x)),
                Op::Abs(a) => accumulate(
                    &mut grads,
                    *a,
                    zip_map(&gout, val(*a), |g, x| if x > 0.0 { g } else if x < 0.0 { -g } else { 0.0 }),
                ),
                Op::Square(a) => {
                    accumulate(&mut grads, *a, zip_map(&gout, val(*a), |g, x| 2.0 * g * x))
                }
                Op::LeakyRelu(a, slope) => accumulate(
                    &mut grads,
                    *a,
                    zip_map(&gout, val(*a), |g, x| if x > 0.0 { g } else { g * slope }),
                ),
                Op::Sigmoid(a) => accumulate(
                    &mut grads,
                    *a,
                    zip_map(&gout, &node.value, |g, y| g * y * (1.0 - y)),
                ),
                Op::Softplus(a) => {
                    accumulate(&mut grads, *a, zip_map(&gout, val(*a), |g, x| g * sigmoid(x)))
                }
                Op::Clamp(a, lo, hi) => accumulate(
                    &mut grads,
                    *a,
                    zip_map(&gout, val(*a), |g, x| if x < *lo || x > *hi { 0.0 } else { g }),
                ),
                Op::Sum(a) => {
                    let g = gout.item();
                    accumulate(&mut grads, *a, Tensor::full(val(*a).shape(), g));
                }
                Op::MulMap(x, m) => {
                    let (n, c, h, w) = val(*x).dims4();
                    let hw = h * w;
                    if ng(*x) {
                        let mv = val(*m).data();
                        let mut dx = gout.clone();
                        for s in 0..n {
                            for ch in 0..c {
                                let off = (s * c + ch) * hw;
                                for (d, mm) in dx.data_mut()[off..off + hw]
                                    .iter_mut()
                                    .zip(&mv[s * hw..(s + 1) * hw])
                                {
                                    *d *= mm;
                                }
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                    if ng(*m) {
                        let xv = val(*x).data();
                        let mut dm = Tensor::zeros(val(*m).shape());
                        for s in 0..n {
                            for ch in 0..c {
                                let off = (s * c + ch) * hw;
                                for p in 0..hw {
                                    dm.data_mut()[s * hw + p] += gout.data()[off + p] * xv[off + p];
                                }
                            }
                        }
                        accumulate(&mut grads, *m, dm);
                    }
                }
                Op::Conv2d { x, w, b, geom } => {
                    let n = val(*x).shape()[0];
                    let c_out = val(*w).shape()[0];
                    let mut dx = ng(*x).then(|| Tensor::zeros(val(*x).shape()));
                    let mut dw = ng(*w).then(|| Tensor::zeros(val(*w).shape()));
                    let mut db = ng(*b).then(|| Tensor::zeros(val(*b).shape()));
                    kernels::conv2d_backward(
                        val(*x).data(),
                        n,
                        geom,
                        val(*w).data(),
                        c_out,
                        gout.data(),
                        dx.as_mut().map(|t| t.data_mut()),
                        dw.as_mut().map(|t| t.data_mut()),
                        db.as_mut().map(|t| t.data_mut()),
                    );
                    if let Some(t) = dx {
                        accumulate(&mut grads, *x, t);
                    }
                    if let Some(t) = dw {
                        accumulate(&mut grads, *w, t);
                    }
                    if let Some(t) = db {
                        accumulate(&mut grads, *b, t);
                    }
                }
                Op::DynDepthwise { x, k, groups } => {
                    let dims = val(*x).dims4();
                    let mut dx = ng(*x).then(|| Tensor::zeros(val(*x).shape()));
                    let mut dk = ng(*k).then(|| Tensor::zeros(val(*k).shape()));
                    kernels::dyn_depthwise_backward(
                        val(*x).data(),
                        dims,
                        val(*k).data(),
                        *groups,
                        gout.data(),
                        dx.as_mut().map(|t| t.data_mut()),
                        dk.as_mut().map(|t| t.data_mut()),
                    );
                    if let Some(t) = dx {
                        accumulate(&mut grads, *x, t);
                    }
                    if let Some(t) = dk {
                        accumulate(&mut grads, *k, t);
                    }
                }
                Op::Upsample2x(a) => {
                    let (n, c, h, w) = val(*a).dims4();
                    let dx = kernels::upsample2x_backward(gout.data(), n * c, h, w);
                    accumulate(&mut grads, *a, Tensor::new(vec![n, c, h, w], dx));
                }
                Op::GlobalAvgPool(a) => {
                    let (n, c, h, w) = val(*a).dims4();
                    let hw = h * w;
                    let mut dx = Tensor::zeros(&[n, c, h, w]);
                    for (plane, &g) in dx.data_mut().chunks_mut(hw).zip(gout.data()) {
                        plane.fill(g / hw as f64);
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::Linear { x, w, b } => {
                    let (n, i) = (val(*x).shape()[0], val(*x).shape()[1]);
                    let o = val(*w).shape()[0];
                    if ng(*x) {
                        let mut dx = Tensor::zeros(&[n, i]);
                        kernels::gemm(
                            n,
                            o,
                            i,
                            1.0,
                            gout.data(),
                            (o as isize, 1),
                            val(*w).data(),
                            (i as isize, 1),
                            0.0,
                            dx.data_mut(),
                            (i as isize, 1),
                        );
                        accumulate(&mut grads, *x, dx);
                    }
                    if ng(*w) {
                        let mut dw = Tensor::zeros(&[o, i]);
                        kernels::gemm(
                            o,
                            n,
                            i,
                            1.0,
                            gout.data(),
                            (1, o as isize),
                            val(*x).data(),
                            (i as isize, 1),
                            0.0,
                            dw.data_mut(),
                            (i as isize, 1),
                        );
                        accumulate(&mut grads, *w, dw);
                    }
                    if ng(*b) {
                        let mut db = Tensor::zeros(&[o]);
                        for row in gout.data().chunks(o) {
                            for (d, g) in db.data_mut().iter_mut().zip(row) {
                                *d += g;
                            }
                        }
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Concat1(a, b) => {
                    let (sa, sb) = (val(*a).shape(), val(*b).shape());
                    let n = sa[0];
                    let ia: usize = sa[1..].iter().product();
                    let ib: usize = sb[1..].iter().product();
                    let mut da = Vec::with_capacity(n * ia);
                    let mut dbv = Vec::with_capacity(n * ib);
                    for row in gout.data().chunks(ia + ib) {
                        da.extend_from_slice(&row[..ia]);
                        dbv.extend_from_slice(&row[ia..]);
                    }
                    if ng(*a) {
                        accumulate(&mut grads, *a, Tensor::new(sa.to_vec(), da));
                    }
                    if ng(*b) {
                        accumulate(&mut grads, *b, Tensor::new(sb.to_vec(), dbv));
                    }
                }
                Op::SelectRows(a, idx) => {
                    let shape = val(*a).shape().to_vec();
                    let inner: usize = shape[1..].iter().product();
                    let mut dx = Tensor::zeros(&shape);
                    for (dst_row, &src) in idx.iter().enumerate() {
                        let g = &gout.data()[dst_row * inner..(dst_row + 1) * inner];
                        for (d, v) in dx.data_mut()[src * inner..(src + 1) * inner].iter_mut().zip(g) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::NarrowRows(a, start) => {
                    let shape = val(*a).shape().to_vec();
                    let inner: usize = shape[1..].iter().product();
                    let mut dx = Tensor::zeros(&shape);
                    dx.data_mut()[start * inner..start * inner + gout.numel()]
                        .copy_from_slice(gout.data());
                    accumulate(&mut grads, *a, dx);
                }
                Op::Reshape(a) => {
                    let shape = val(*a).shape().to_vec();
                    accumulate(&mut grads, *a, gout.reshape(&shape));
                }
                Op::CrossEntropy(a, labels) => {
                    let g = gout.item();
                    let logits = val(*a);
                    let k = logits.shape()[1];
                    let n = labels.len();
                    let mut dx = Tensor::zeros(logits.shape());
                    for (s, &label) in labels.iter().enumerate() {
                        let row = &logits.data()[s * k..(s + 1) * k];
                        let probs = softmax(row);
                        for (c, p) in probs.iter().enumerate() {
                            let target = if c == label { 1.0 } else { 0.0 };
                            dx.data_mut()[s * k + c] = g * (p - target) / n as f64;
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
            }
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Gradients { grads, shapes }
    }
}

pub(crate) fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor> {
        self.graph.value(*self)
    }

    /// Copy of the current value.
    pub fn tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    /// Value re-recorded as a constant: gradient does not flow through.
    pub fn detach(&self) -> Var<'g> {
        self.graph.constant(self.tensor())
    }

    pub fn scale(self, s: f64) -> Var<'g> {
        self.graph.unary(self, |t| t.map(|v| v * s), Op::Scale(self.id, s))
    }

    pub fn offset(self, c: f64) -> Var<'g> {
        self.graph.unary(self, |t| t.map(|v| v + c), Op::Offset(self.id))
    }

    pub fn exp(self) -> Var<'g> {
        self.graph.unary(self, |t| t.map(f64::exp), Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'g> {
        self.graph.unary(self, |t| t.map(f64::ln), Op::Log(self.id))
    }

    pub fn abs(self) -> Var<'g> {
        self.graph.unary(self, |t| t.map(f64::abs), Op::Abs(self.id))
    }

    pub fn square(self) -> Var<'g> {
        self.graph.unary(self, |t| t.map(|v| v * v), Op::Square(self.id))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g> {
        self.graph.unary(
            self,
            |t| t.map(|v| if v > 0.0 { v } else { v * slope }),
            Op::LeakyRelu(self.id, slope),
        )
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.graph.unary(self, |t| t.map(sigmoid), Op::Sigmoid(self.id))
    }

    pub fn softplus(self) -> Var<'g> {
        self.graph.unary(self, |t| t.map(softplus), Op::Softplus(self.id))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'g> {
        self.graph
            .unary(self, |t| t.map(|v| v.clamp(lo, hi)), Op::Clamp(self.id, lo, hi))
    }

    pub fn sum(self) -> Var<'g> {
        self.graph
            .unary(self, |t| Tensor::scalar(t.sum()), Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'g> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// `[n, c, h, w] ⊙ [n, 1, h, w]`, broadcasting the map over channels.
    pub fn mul_map(self, map: Var<'g>) -> Var<'g> {
        let (value, op) = {
            let x = self.value();
            let m = map.value();
            let (n, c, h, w) = x.dims4();
            assert_eq!(m.shape(), &[n, 1, h, w], "map shape mismatch");
            let hw = h * w;
            let mut out = x.clone();
            for s in 0..n {
                for ch in 0..c {
                    let off = (s * c + ch) * hw;
                    for (o, mm) in out.data_mut()[off..off + hw]
                        .iter_mut()
                        .zip(&m.data()[s * hw..(s + 1) * hw])
                    {
                        *o *= mm;
                    }
                }
            }
            (out, Op::MulMap(self.id, map.id))
        };
        self.graph.binary(self, map, value, op)
    }

    /// 2-d convolution; `weight: [c_out, c_in, k, k]`, `bias: [c_out]`.
    pub fn conv2d(self, weight: Var<'g>, bias: Var<'g>, stride: usize, pad: usize) -> Var<'g> {
        let (value, geom) = {
            let x = self.value();
            let w = weight.value();
            let (n, c, h, wd) = x.dims4();
            let (c_out, c_in, k, k2) = w.dims4();
            assert_eq!(c, c_in, "conv input channels {c} vs weight {c_in}");
            assert_eq!(k, k2);
            let geom = ConvGeom::new(c, h, wd, k, stride, pad);
            let out = kernels::conv2d_forward(x.data(), n, &geom, w.data(), bias.value().data(), c_out);
            (Tensor::new(vec![n, c_out, geom.h_out, geom.w_out], out), geom)
        };
        let ng = [self.id, weight.id, bias.id].iter().any(|&i| self.graph.needs(i));
        self.graph.push(
            value,
            Op::Conv2d {
                x: self.id,
                w: weight.id,
                b: bias.id,
                geom,
            },
            ng,
        )
    }

    /// Depthwise 3×3 convolution with per-sample kernels `[n, groups, 3, 3]`.
    pub fn dyn_depthwise(self, kernels: Var<'g>) -> Var<'g> {
        let (value, groups) = {
            let x = self.value();
            let k = kernels.value();
            let dims = x.dims4();
            let (kn, groups, kh, kw) = k.dims4();
            assert_eq!((kn, kh, kw), (dims.0, 3, 3), "kernel shape mismatch");
            assert_eq!(dims.1 % groups, 0, "channels not divisible by groups");
            let out = kernels::dyn_depthwise(x.data(), dims, k.data(), groups);
            (Tensor::new(x.shape().to_vec(), out), groups)
        };
        self.graph.binary(
            self,
            kernels,
            value,
            Op::DynDepthwise {
                x: self.id,
                k: kernels.id,
                groups,
            },
        )
    }

    pub fn upsample2x(self) -> Var<'g> {
        self.graph.unary(
            self,
            |t| {
                let (n, c, h, w) = t.dims4();
                Tensor::new(vec![n, c, 2 * h, 2 * w], kernels::upsample2x(t.data(), n * c, h, w))
            },
            Op::Upsample2x(self.id),
        )
    }

    /// `[n, c, h, w] -> [n, c]`.
    pub fn global_avg_pool(self) -> Var<'g> {
        self.graph.unary(
            self,
            |t| {
                let (n, c, h, w) = t.dims4();
                let data = t
                    .data()
                    .chunks(h * w)
                    .map(|p| p.iter().sum::<f64>() / (h * w) as f64)
                    .collect();
                Tensor::new(vec![n, c], data)
            },
            Op::GlobalAvgPool(self.id),
        )
    }

    /// `x·wᵀ + b` for `x: [n, in]`, `w: [out, in]`.
    pub fn linear(self, weight: Var<'g>, bias: Var<'g>) -> Var<'g> {
        let value = {
            let x = self.value();
            let w = weight.value();
            let (n, i) = (x.shape()[0], x.shape()[1]);
            let o = w.shape()[0];
            assert_eq!(w.shape()[1], i, "linear input width mismatch");
            let mut out = Vec::with_capacity(n * o);
            for _ in 0..n {
                out.extend_from_slice(bias.value().data());
            }
            kernels::gemm(
                n,
                i,
                o,
                1.0,
                x.data(),
                (i as isize, 1),
                w.data(),
                (1, i as isize),
                1.0,
                &mut out,
                (o as isize, 1),
            );
            Tensor::new(vec![n, o], out)
        };
        let ng = [self.id, weight.id, bias.id].iter().any(|&i| self.graph.needs(i));
        self.graph.push(
            value,
            Op::Linear {
                x: self.id,
                w: weight.id,
                b: bias.id,
            },
            ng,
        )
    }

    /// Concatenation along axis 1.
    pub fn concat(self, other: Var<'g>) -> Var<'g> {
        let value = {
            let a = self.value();
            let b = other.value();
            let (sa, sb) = (a.shape(), b.shape());
            assert_eq!(sa.len(), sb.len());
            assert_eq!(sa[0], sb[0]);
            assert_eq!(sa[2..], sb[2..], "concat trailing dims differ");
            let n = sa[0];
            let ia: usize = sa[1..].iter().product();
            let ib: usize = sb[1..].iter().product();
            let mut data = Vec::with_capacity(n * (ia + ib));
            for s in 0..n {
                data.extend_from_slice(&a.data()[s * ia..(s + 1) * ia]);
                data.extend_from_slice(&b.data()[s * ib..(s + 1) * ib]);
            }
            let mut shape = sa.to_vec();
            shape[1] += sb[1];
            Tensor::new(shape, data)
        };
        self.graph.binary(self, other, value, Op::Concat1(self.id, other.id))
    }

    /// Gathers rows of the leading axis: `out[i] = self[idx[i]]`.
    pub fn select_rows(self, idx: &[usize]) -> Var<'g> {
        let value = {
            let t = self.value();
            let inner: usize = t.shape()[1..].iter().product();
            let mut data = Vec::with_capacity(idx.len() * inner);
            for &i in idx {
                data.extend_from_slice(&t.data()[i * inner..(i + 1) * inner]);
            }
            let mut shape = t.shape().to_vec();
            shape[0] = idx.len();
            Tensor::new(shape, data)
        };
        let ng = self.graph.needs(self.id);
        self.graph
            .push(value, Op::SelectRows(self.id, idx.to_vec()), ng)
    }

    pub fn narrow_rows(self, start: usize, len: usize) -> Var<'g> {
        self.graph.unary(
            self,
            |t| t.narrow_rows(start, len),
            Op::NarrowRows(self.id, start),
        )
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'g> {
        self.graph
            .unary(self, |t| t.clone().reshape(shape), Op::Reshape(self.id))
    }

    /// Mean cross-entropy of `[n, k]` logits against class labels.
    pub fn cross_entropy(self, labels: &[usize]) -> Var<'g> {
        let value = {
            let t = self.value();
            let k = t.shape()[1];
            assert_eq!(t.shape()[0], labels.len());
            let mut total = 0.0;
            for (s, &label) in labels.iter().enumerate() {
                let row = &t.data()[s * k..(s + 1) * k];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += lse - row[label];
            }
            Tensor::scalar(total / labels.len() as f64)
        };
        let ng = self.graph.needs(self.id);
        self.graph
            .push(value, Op::CrossEntropy(self.id, labels.to_vec()), ng)
    }
}

impl<'g> ops::Add for Var<'g> {
    type Output = Var<'g>;
    fn add(self, rhs: Var<'g>) -> Var<'g> {
        let v = zip_map(&self.value(), &rhs.value(), |a, b| a + b);
        self.graph.binary(self, rhs, v, Op::Add(self.id, rhs.id))
    }
}

impl<'g> ops::Sub for Var<'g> {
    type Output = Var<'g>;
    fn sub(self, rhs: Var<'g>) -> Var<'g> {
        let v = zip_map(&self.value(), &rhs.value(), |a, b| a - b);
        self.graph.binary(self, rhs, v, Op::Sub(self.id, rhs.id))
    }
}

impl<'g> ops::Mul for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: Var<'g>) -> Var<'g> {
        let v = zip_map(&self.value(), &rhs.value(), |a, b| a * b);
        self.graph.binary(self, rhs, v, Op::Mul(self.id, rhs.id))
    }
}

impl<'g> ops::Neg for Var<'g> {
    type Output = Var<'g>;
    fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }
}
